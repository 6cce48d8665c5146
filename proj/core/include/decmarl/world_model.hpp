#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "decmarl/decpomdp.hpp"

namespace decmarl {

inline constexpr ObsId kNullObservation = -1;

// Bonus of a pair no member has seen: the supremum of the variance sum for
// rewards in [0, 1] (dynamics below 1, reward and termination at most 0.25 each).
inline constexpr double kUnvisitedPairBonus = 1.5;

struct PairKey {
  StateId state = 0;
  JointActionId action = 0;

  bool operator==(const PairKey&) const = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const {
    return static_cast<std::size_t>(splitmix64(static_cast<std::uint64_t>(k.state) * 0x9E3779B97F4A7C15ULL ^
                                               static_cast<std::uint64_t>(k.action)));
  }
};

// Append-only list of transitions indexed by (state, joint action).
class Dataset {
 public:
  void append(Transition t);
  void append(const Trajectory& trajectory);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Transition& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<Transition>& records() const { return records_; }
  // Record positions for (s, a); empty when unseen.
  const std::vector<std::size_t>& indices(StateId s, JointActionId a) const;
  std::size_t visits(StateId s, JointActionId a) const { return indices(s, a).size(); }
  std::size_t distinct_pairs() const { return index_.size(); }
  // Distinct pairs in first-visit order.
  const std::vector<PairKey>& pairs() const { return pair_order_; }

  // One transition per line: timestep state previous action reward next
  // terminated, then per-agent observation, availability and next observation.
  std::string serialize() const;
  static Dataset parse(const std::string& text);

 private:
  std::vector<Transition> records_;
  std::unordered_map<PairKey, std::vector<std::size_t>, PairKeyHash> index_;
  std::vector<PairKey> pair_order_;
};

struct PairStatistics {
  std::vector<std::pair<StateId, std::int64_t>> successors;  // sorted by state
  std::int64_t count = 0;
  double reward_sum = 0.0;
  std::int64_t terminations = 0;

  double reward_mean() const { return count == 0 ? 0.0 : reward_sum / static_cast<double>(count); }
  double termination_probability() const {
    return count == 0 ? 0.0 : static_cast<double>(terminations) / static_cast<double>(count);
  }
  double probability(StateId s) const;
};

// Maximum-likelihood counts over dynamics, reward and termination.
class EmpiricalModel {
 public:
  void add(StateId s, JointActionId a, double reward, StateId next, bool terminated);
  // Replaces the statistics of (s, a) wholesale, e.g. when loading.
  void set(StateId s, JointActionId a, PairStatistics stats);

  const PairStatistics* find(StateId s, JointActionId a) const;
  bool seen(StateId s, JointActionId a) const { return find(s, a) != nullptr; }
  std::size_t num_pairs() const { return pairs_.size(); }
  const std::unordered_map<PairKey, PairStatistics, PairKeyHash>& pairs() const { return pairs_; }
  // Empirical successor distribution; empty when unseen.
  std::vector<Successor> dynamics(StateId s, JointActionId a) const;
  StateId sample_successor(const PairStatistics& stats, Rng& rng) const;

  bool operator==(const EmpiricalModel& other) const;

 private:
  std::unordered_map<PairKey, PairStatistics, PairKeyHash> pairs_;
};

// Deterministic observation table keyed by (state, previous joint action).
class ObservationModel {
 public:
  // Throws std::runtime_error when a different observation was recorded before.
  void record(StateId s, JointActionId previous, const std::vector<ObsId>& observation);
  const std::vector<ObsId>* find(StateId s, JointActionId previous) const;
  // Exact entry, else the first observation seen in s, else the null observation.
  std::vector<ObsId> lookup(StateId s, JointActionId previous, int num_agents) const;
  std::size_t size() const { return table_.size(); }
  const std::unordered_map<PairKey, std::vector<ObsId>, PairKeyHash>& table() const { return table_; }

 private:
  std::unordered_map<PairKey, std::vector<ObsId>, PairKeyHash> table_;
  std::unordered_map<StateId, std::vector<ObsId>> by_state_;
};

class AvailabilityModel {
 public:
  void record(StateId s, const std::vector<ActionMask>& masks);
  const std::vector<ActionMask>* find(StateId s) const;
  // Recorded mask, else every action.
  ActionMask lookup(StateId s, int agent, int num_actions) const;
  std::size_t size() const { return table_.size(); }
  const std::unordered_map<StateId, std::vector<ActionMask>>& table() const { return table_; }

 private:
  std::unordered_map<StateId, std::vector<ActionMask>> table_;
};

struct ModelStep {
  StateId next_state = 0;
  std::vector<ObsId> observation;
  double reward = 0.0;
  bool terminated = false;
  bool seen = false;
};

struct FitOptions {
  int members = 5;
  bool bootstrap = true;
};

class EnsembleWorldModel {
 public:
  EnsembleWorldModel(DecPomdpShape shape, std::vector<EmpiricalModel> members, ObservationModel observations,
                     AvailabilityModel availability);

  const DecPomdpShape& shape() const { return shape_; }
  int num_members() const { return static_cast<int>(members_.size()); }
  const EmpiricalModel& member(int k) const { return members_[static_cast<std::size_t>(k)]; }
  const ObservationModel& observations() const { return observations_; }
  const AvailabilityModel& availability() const { return availability_; }
  ActionMask available(StateId s, int agent) const;

  // member < 0 draws one uniformly. Unseen pairs end the rollout in place
  // with zero reward.
  ModelStep sample_step(int member, StateId s, JointActionId a, Rng& rng) const;
  // Sum over dynamics, reward and termination outputs of the population
  // variance across members. Members that never saw (s, a) predict uniform
  // dynamics, reward 0 and termination 0.5; when none has, the bonus is
  // kUnvisitedPairBonus.
  double uncertainty_bonus(StateId s, JointActionId a) const;

  std::string serialize() const;
  static EnsembleWorldModel parse(const std::string& text);
  bool operator==(const EnsembleWorldModel& other) const;

 private:
  DecPomdpShape shape_;
  std::vector<EmpiricalModel> members_;
  ObservationModel observations_;
  AvailabilityModel availability_;
  MixedRadix joint_;
};

// Members are fitted on independent bootstrap resamples of the dataset
// (or on all of it when bootstrap is off); observation and availability
// tables always use every record.
EnsembleWorldModel fit_ensemble(const Dataset& dataset, const DecPomdpShape& shape, const FitOptions& options,
                                Rng& rng);

struct ModelError {
  double max_l1_dynamics = 0.0;
  double max_abs_reward = 0.0;
};

// Throws std::invalid_argument if a restricted pair was never seen.
ModelError model_error(const EmpiricalModel& model, const TabularDecPomdp& env, const std::vector<PairKey>& restriction);

}  // namespace decmarl
