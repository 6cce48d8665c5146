#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "decmarl/indexing.hpp"
#include "decmarl/rng.hpp"

namespace decmarl {

using StateId = std::int64_t;
using ObsId = std::int64_t;
using JointActionId = std::int64_t;
// Bit k set means action k is selectable.
using ActionMask = std::uint64_t;

inline constexpr JointActionId kNoJointAction = -1;
inline constexpr int kMaxActionsPerAgent = 64;
inline constexpr std::int64_t kDefaultMaterializeLimit = 20'000'000;

inline ActionMask full_mask(int num_actions) {
  return num_actions >= 64 ? ~ActionMask{0} : ((ActionMask{1} << num_actions) - 1);
}
inline bool mask_contains(ActionMask mask, int action) { return (mask >> action) & 1U; }
inline int mask_size(ActionMask mask) { return std::popcount(mask); }
inline int lowest_action(ActionMask mask) { return std::countr_zero(mask); }
std::vector<int> mask_actions(ActionMask mask);

// Reward drawn uniformly from [mean - noise, mean + noise].
struct RewardSpec {
  double mean = 0.0;
  double noise = 0.0;
};

struct RewardBounds {
  double min = 0.0;
  double max = 1.0;
};

struct Successor {
  StateId state = 0;
  double probability = 0.0;
};

struct DecPomdpShape {
  int num_agents = 1;
  StateId num_states = 1;
  std::vector<int> actions_per_agent;
  std::vector<ObsId> obs_per_agent;
  double gamma = 0.99;
  int horizon = 1;

  bool operator==(const DecPomdpShape&) const = default;
};

// What a deterministic decentralized policy conditions on: per agent, the
// observations that can occur at reset, the observation alphabet, and the
// actions selectable after each observation.
struct AgentPolicySpace {
  std::vector<ObsId> initial_observations;  // sorted, distinct
  ObsId num_observations = 1;
  int num_actions = 1;
  // Indexed by observation; empty means every action after every observation.
  std::vector<ActionMask> masks_by_observation;

  ActionMask mask_for(ObsId observation) const;
};

struct PolicySpace {
  int horizon = 1;
  std::vector<AgentPolicySpace> agents;
};

// Generative description of a finite Dec-POMDP. Observations are a
// deterministic function of (state, previous joint action), the previous
// action being kNoJointAction at reset.
class TabularDecPomdp {
 public:
  explicit TabularDecPomdp(DecPomdpShape shape);
  virtual ~TabularDecPomdp() = default;

  const DecPomdpShape& shape() const { return shape_; }
  int num_agents() const { return shape_.num_agents; }
  StateId num_states() const { return shape_.num_states; }
  int horizon() const { return shape_.horizon; }
  double gamma() const { return shape_.gamma; }
  int num_actions(int agent) const { return shape_.actions_per_agent[agent]; }
  const MixedRadix& joint_actions() const { return joint_actions_; }
  JointActionId num_joint_actions() const { return joint_actions_.size(); }

  JointActionId encode_action(std::span<const int> actions) const { return joint_actions_.encode(actions); }
  std::vector<int> decode_action(JointActionId a) const;
  int agent_action(JointActionId a, int agent) const {
    return static_cast<int>(joint_actions_.digit(a, static_cast<std::size_t>(agent)));
  }

  virtual std::string name() const = 0;
  // Successor states with positive probability, ordered by state id.
  virtual void successors(StateId s, JointActionId a, std::vector<Successor>& out) const = 0;
  virtual RewardSpec reward(StateId s, JointActionId a) const = 0;
  virtual double termination(StateId s, JointActionId a) const = 0;
  virtual void observe(StateId s, JointActionId previous, std::span<ObsId> out) const = 0;
  virtual ActionMask available(StateId s, int agent) const = 0;
  // Support of d0. Throws std::length_error when d0 is too large to list.
  virtual void initial_states(std::vector<Successor>& out) const = 0;
  virtual RewardBounds reward_bounds() const = 0;

  virtual StateId sample_initial(Rng& rng) const;
  virtual StateId sample_successor(StateId s, JointActionId a, Rng& rng) const;
  // Default scans every (state, previous action) pair.
  virtual PolicySpace policy_space() const;

  std::vector<ObsId> observe(StateId s, JointActionId previous) const;
  bool joint_action_available(StateId s, JointActionId a) const;
  // True when |S| * |A| fits under `limit`, i.e. tables can be listed.
  bool enumerable(std::int64_t limit = kDefaultMaterializeLimit) const;

 private:
  DecPomdpShape shape_;
  MixedRadix joint_actions_;
};

using EnvPtr = std::shared_ptr<const TabularDecPomdp>;

// Plain tables of an explicitly listed Dec-POMDP.
struct DecPomdpTables {
  std::string name = "explicit";
  DecPomdpShape shape;
  RewardBounds reward_bounds;
  std::vector<double> initial;                      // [s]
  std::vector<std::vector<Successor>> transitions;  // [s * A + a]
  std::vector<RewardSpec> rewards;                  // [s * A + a]
  std::vector<double> terminations;                 // [s * A + a]
  std::vector<ObsId> observations;                  // [(s * (A + 1) + previous + 1) * N + j]
  std::vector<ActionMask> availability;             // [s * N + j]

  std::size_t pair_index(StateId s, JointActionId a) const;
  std::size_t observation_index(StateId s, JointActionId previous, int agent) const;
  // Allocates every table for `shape` with neutral contents.
  static DecPomdpTables allocate(std::string name, DecPomdpShape shape);
};

// Throws std::invalid_argument naming the first violated invariant.
void validate_tables(const DecPomdpTables& tables);
DecPomdpTables materialize(const TabularDecPomdp& env, std::int64_t limit = kDefaultMaterializeLimit);

class ExplicitDecPomdp : public TabularDecPomdp {
 public:
  explicit ExplicitDecPomdp(DecPomdpTables tables);

  const DecPomdpTables& tables() const { return tables_; }

  std::string name() const override { return tables_.name; }
  void successors(StateId s, JointActionId a, std::vector<Successor>& out) const override;
  RewardSpec reward(StateId s, JointActionId a) const override;
  double termination(StateId s, JointActionId a) const override;
  void observe(StateId s, JointActionId previous, std::span<ObsId> out) const override;
  ActionMask available(StateId s, int agent) const override;
  void initial_states(std::vector<Successor>& out) const override;
  RewardBounds reward_bounds() const override { return tables_.reward_bounds; }
  StateId sample_initial(Rng& rng) const override;
  StateId sample_successor(StateId s, JointActionId a, Rng& rng) const override;

  using TabularDecPomdp::observe;

 private:
  DecPomdpTables tables_;
};

// One agent's action-observation history (o_0, a_0, o_1, ..., o_t).
class AgentHistory {
 public:
  void clear() { elements_.clear(); }
  void push_observation(ObsId o) { elements_.push_back(o); }
  void push_action(int a) { elements_.push_back(a); }
  void pop() { elements_.pop_back(); }

  const std::vector<std::int64_t>& elements() const { return elements_; }
  std::size_t size() const { return elements_.size(); }
  bool empty() const { return elements_.empty(); }
  // Decisions already taken, i.e. t for a history ending in o_t.
  std::size_t depth() const { return elements_.size() / 2; }
  ObsId last_observation() const { return elements_.back(); }
  ObsId observation_at(std::size_t t) const { return elements_[2 * t]; }

  bool operator==(const AgentHistory&) const = default;

 private:
  std::vector<std::int64_t> elements_;
};

struct Transition {
  int timestep = 0;
  StateId state = 0;
  JointActionId previous_joint_action = kNoJointAction;
  std::vector<ObsId> observation;
  std::vector<ActionMask> available;
  JointActionId joint_action = 0;
  double reward = 0.0;
  StateId next_state = 0;
  std::vector<ObsId> next_observation;
  bool terminated = false;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  StateId initial_state = 0;
  std::vector<Transition> transitions;

  std::size_t length() const { return transitions.size(); }
  double discounted_return(double gamma) const;
  double total_reward() const;
};

struct ResetResult {
  StateId state = 0;
  std::vector<ObsId> observation;
};

struct StepResult {
  StateId next_state = 0;
  std::vector<ObsId> observation;
  double reward = 0.0;
  bool terminated = false;
};

ResetResult reset(const TabularDecPomdp& env, Rng& rng);
// Throws std::invalid_argument when an agent's action is not available.
StepResult step(const TabularDecPomdp& env, StateId s, std::span<const int> joint_action, Rng& rng);
StepResult step(const TabularDecPomdp& env, StateId s, JointActionId joint_action, Rng& rng);
double sample_reward(const RewardSpec& spec, Rng& rng);

}  // namespace decmarl
