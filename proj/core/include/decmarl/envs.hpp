#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "decmarl/decpomdp.hpp"

namespace decmarl {

// --- switch riddle -------------------------------------------------------------

// Per-agent action ids. Without the bridge only the first four exist.
enum SwitchAction : int {
  kSwitchNone = 0,
  kSwitchTell = 1,
  kSwitchTurnOn = 2,
  kSwitchTurnOff = 3,
  kSwitchLeft = 4,
  kSwitchRight = 5,
  kSwitchEndEpisode = 6,
};

enum class SwitchPhase { kBridge, kRiddle };

struct SwitchOptions {
  int num_agents = 3;
  int horizon = 6;
  bool with_bridge = false;
  int bridge_length = 3;
};

// The step counter is not part of the state; the horizon bounds episodes.
// `visited` holds the agents that were in the room before the current step.
struct SwitchState {
  SwitchPhase phase = SwitchPhase::kRiddle;
  std::vector<int> positions;
  int in_room = 0;
  bool switch_on = false;
  std::uint32_t visited = 0;

  bool operator==(const SwitchState&) const = default;
};

class SwitchCodec {
 public:
  explicit SwitchCodec(SwitchOptions options);

  const SwitchOptions& options() const { return options_; }
  StateId num_states() const { return num_bridge_states_ + num_riddle_states_; }
  StateId num_bridge_states() const { return num_bridge_states_; }
  StateId encode(const SwitchState& state) const;
  SwitchState decode(StateId id) const;
  ObsId num_observations() const;
  int num_actions() const { return options_.with_bridge ? 7 : 4; }

 private:
  SwitchOptions options_;
  StateId num_bridge_states_ = 0;
  StateId num_riddle_states_ = 0;
};

// Defaults give the riddle without bridge (3 agents, H=6). For the bridge
// variant the usual horizon is 9 (see make_switch_bridge).
EnvPtr make_switch(const SwitchOptions& options = {});
EnvPtr make_switch_bridge(int num_agents = 3, int horizon = 9, int bridge_length = 3);

// --- grid reference game -------------------------------------------------------------

enum GridMove : int { kMoveLeft = 0, kMoveRight = 1, kMoveUp = 2, kMoveDown = 3, kMoveStay = 4 };

struct GridReferenceOptions {
  int grid_size = 5;
  int num_messages = 10;
  int horizon = 8;
  double gamma = 0.99;
};

struct GridReferenceState {
  int agent_pos[2] = {0, 0};
  int landmark_pos[3] = {0, 0, 0};
  int goal[2] = {0, 1};      // landmark index assigned to each agent; distinct
  int last_message[2] = {0, 0};  // num_messages means none yet

  bool operator==(const GridReferenceState&) const = default;
};

// Two agents on a grid with three colored landmarks. Each agent must reach its
// own landmark but only sees the other agent's goal, so the goals have to be
// communicated over a one-step-delayed message channel. Defined procedurally:
// the state space is far too large to list.
class GridReferenceDecPomdp final : public TabularDecPomdp {
 public:
  explicit GridReferenceDecPomdp(GridReferenceOptions options);

  const GridReferenceOptions& options() const { return options_; }
  StateId encode(const GridReferenceState& st) const;
  GridReferenceState decode(StateId id) const;
  int encode_action(int move, int message) const { return move * options_.num_messages + message; }
  int move_of(int action) const { return action / options_.num_messages; }
  int message_of(int action) const { return action % options_.num_messages; }
  // Observation fields of agent j: own cell, landmark cells, other's goal, other's last message.
  ObsId encode_observation(int own_pos, const int landmark_pos[3], int other_goal, int other_message) const;
  double reward_at(const GridReferenceState& st) const;

  std::string name() const override { return "grid_ref"; }
  void successors(StateId s, JointActionId a, std::vector<Successor>& out) const override;
  RewardSpec reward(StateId s, JointActionId a) const override;
  double termination(StateId, JointActionId) const override { return 0.0; }
  void observe(StateId s, JointActionId previous, std::span<ObsId> out) const override;
  ActionMask available(StateId, int agent) const override { return full_mask(num_actions(agent)); }
  void initial_states(std::vector<Successor>& out) const override;
  RewardBounds reward_bounds() const override { return {0.0, 1.0}; }
  StateId sample_initial(Rng& rng) const override;
  StateId sample_successor(StateId s, JointActionId a, Rng& rng) const override;
  PolicySpace policy_space() const override;

  using TabularDecPomdp::encode_action;
  using TabularDecPomdp::observe;

 private:
  GridReferenceState step_state(const GridReferenceState& st, JointActionId a) const;
  int move_cell(int cell, int move) const;

  GridReferenceOptions options_;
  int cells_;
};

std::shared_ptr<const GridReferenceDecPomdp> make_grid_reference(const GridReferenceOptions& options = {});

// --- random instances -------------------------------------------------------------

struct RandomDecPomdpSpec {
  int num_agents = 2;
  StateId num_states = 3;
  std::vector<int> actions_per_agent{2, 2};
  std::vector<ObsId> obs_per_agent{2, 2};
  int horizon = 3;
  double gamma = 0.9;
  // Per-pair termination probability is drawn uniformly from [0, rate].
  double termination_rate = 0.0;
  // Half-width of uniform reward noise, shrunk where it would leave [0, 1].
  double reward_noise = 0.0;
  // Every agent sees observation 0 at reset.
  bool blank_initial_observation = false;
};

// Dirichlet(1) transition rows and d0, mean rewards uniform on [0, 1],
// deterministic observations drawn uniformly. Declares reward bounds [0, 1].
DecPomdpTables random_decpomdp_tables(const RandomDecPomdpSpec& spec, Rng& rng);
EnvPtr make_random_decpomdp(const RandomDecPomdpSpec& spec, Rng& rng);

// 2 agents, 2 actions, 2 observations, horizon 2, blank reset observation:
// 64 deterministic joint policies.
RandomDecPomdpSpec canonical_tiny_spec();

// --- reward normalization -------------------------------------------------------------

// r -> (r - min) / (max - min) for the env's declared reward bounds.
struct RewardMap {
  double offset = 0.0;
  double scale = 1.0;

  double apply(double r) const { return (r - offset) / scale; }
  double invert(double r) const { return r * scale + offset; }
  bool identity() const { return offset == 0.0 && scale == 1.0; }
};

class NormalizedDecPomdp final : public TabularDecPomdp {
 public:
  explicit NormalizedDecPomdp(EnvPtr base);

  const TabularDecPomdp& base() const { return *base_; }
  const RewardMap& map() const { return map_; }

  std::string name() const override { return base_->name(); }
  void successors(StateId s, JointActionId a, std::vector<Successor>& out) const override {
    base_->successors(s, a, out);
  }
  RewardSpec reward(StateId s, JointActionId a) const override;
  double termination(StateId s, JointActionId a) const override { return base_->termination(s, a); }
  void observe(StateId s, JointActionId previous, std::span<ObsId> out) const override {
    base_->observe(s, previous, out);
  }
  ActionMask available(StateId s, int agent) const override { return base_->available(s, agent); }
  void initial_states(std::vector<Successor>& out) const override { base_->initial_states(out); }
  RewardBounds reward_bounds() const override { return {0.0, 1.0}; }
  StateId sample_initial(Rng& rng) const override { return base_->sample_initial(rng); }
  StateId sample_successor(StateId s, JointActionId a, Rng& rng) const override {
    return base_->sample_successor(s, a, rng);
  }
  PolicySpace policy_space() const override { return base_->policy_space(); }

  using TabularDecPomdp::observe;

 private:
  EnvPtr base_;
  RewardMap map_;
};

// Throws std::invalid_argument when the declared bounds coincide.
std::shared_ptr<const NormalizedDecPomdp> normalize_rewards(EnvPtr env);

// --- text format -------------------------------------------------------------

std::string save_tables(const DecPomdpTables& tables);
DecPomdpTables load_tables(const std::string& text);
void save_tables_file(const DecPomdpTables& tables, const std::string& path);
DecPomdpTables load_tables_file(const std::string& path);

}  // namespace decmarl
