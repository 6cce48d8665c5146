#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "decmarl/agents.hpp"
#include "decmarl/decpomdp.hpp"
#include "decmarl/evaluation.hpp"
#include "decmarl/world_model.hpp"

namespace decmarl {

struct LearnerConfig {
  LearnerKind kind = LearnerKind::kVdn;
  double alpha = 0.1;
  std::int64_t target_sync = 200;
  EpsilonSchedule epsilon{1.0, 0.05, 50'000, false};
  // Episodes kept for replayed updates; 0 trains online only.
  int replay_episodes = 0;
};

struct MarcoConfig {
  int ensemble_size = 5;
  bool bootstrap = true;
  double lambda = 2.0;
  std::int64_t init_random_samples = 5000;
  std::int64_t samples_per_round = 5000;
  std::int64_t model_train_steps_per_round = 10'000;
  std::int64_t explore_train_steps_per_round = 10'000;
  std::int64_t env_sample_cap = 10'000;
  double collection_epsilon = 0.1;
  double gamma = 0.99;
  // Off: collect with the agents' own epsilon-greedy policies instead.
  bool use_exploration_policy = true;
  std::int64_t eval_episodes = 50;
  int eval_interval = 1;
  LearnerConfig learner;
  LearnerConfig explorer;
};

void validate(const MarcoConfig& config);

// Round sizes used for each env: switch keeps the struct defaults;
// switch_bridge and grid_ref collect 10k per round with 50k model steps and a 50k cap.
MarcoConfig marco_defaults(const std::string& env_id);

struct MetricsRow {
  std::uint64_t seed = 0;
  int round = 0;
  std::int64_t env_samples = 0;
  std::int64_t model_steps = 0;
  double test_return_mean = 0.0;
  double test_return_se = 0.0;
  std::int64_t dataset_size = 0;
  std::int64_t distinct_sa_pairs = 0;
  double mean_log_uncertainty = 0.0;  // NaN when no model was fitted
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);

struct CoverageRecord {
  StateId state = 0;
  JointActionId joint_action = 0;
  std::int64_t visits = 0;
  double log_uncertainty = 0.0;
};

std::string coverage_header();
std::string coverage_line(const CoverageRecord& record);

// Counts real transitions drawn through it; everything else forwards.
class StepCountingEnv final : public TabularDecPomdp {
 public:
  explicit StepCountingEnv(const TabularDecPomdp& base) : TabularDecPomdp(base.shape()), base_(base) {}

  std::int64_t steps() const { return steps_.load(); }

  std::string name() const override { return base_.name(); }
  void successors(StateId s, JointActionId a, std::vector<Successor>& out) const override { base_.successors(s, a, out); }
  RewardSpec reward(StateId s, JointActionId a) const override { return base_.reward(s, a); }
  double termination(StateId s, JointActionId a) const override { return base_.termination(s, a); }
  void observe(StateId s, JointActionId previous, std::span<ObsId> out) const override { base_.observe(s, previous, out); }
  ActionMask available(StateId s, int agent) const override { return base_.available(s, agent); }
  void initial_states(std::vector<Successor>& out) const override { base_.initial_states(out); }
  RewardBounds reward_bounds() const override { return base_.reward_bounds(); }
  StateId sample_initial(Rng& rng) const override { return base_.sample_initial(rng); }
  StateId sample_successor(StateId s, JointActionId a, Rng& rng) const override {
    ++steps_;
    return base_.sample_successor(s, a, rng);
  }
  PolicySpace policy_space() const override { return base_.policy_space(); }

  using TabularDecPomdp::observe;

 private:
  const TabularDecPomdp& base_;
  mutable std::atomic<std::int64_t> steps_{0};
};

// Acting rule for real-env data collection; may use the central state.
class BehaviorPolicy {
 public:
  virtual ~BehaviorPolicy() = default;
  virtual int act(int agent, StateId s, const AgentHistory& history, ActionMask available, Rng& rng) const = 0;
};

class UniformBehavior final : public BehaviorPolicy {
 public:
  int act(int, StateId, const AgentHistory&, ActionMask available, Rng& rng) const override {
    return uniform_available_action(available, rng);
  }
};

// Epsilon-greedy over per-agent tables keyed by central state or by history.
class TableBehavior final : public BehaviorPolicy {
 public:
  TableBehavior(const std::vector<QTable>& tables, double epsilon) : tables_(tables), epsilon_(epsilon) {}
  int act(int agent, StateId s, const AgentHistory& history, ActionMask available, Rng& rng) const override;

 private:
  const std::vector<QTable>& tables_;
  double epsilon_;
};

// Runs real episodes until exactly n transitions were appended; the last
// episode may be cut short. Returns the number of env steps taken (n).
std::int64_t collect_env_samples(const TabularDecPomdp& env, const BehaviorPolicy& behavior, std::int64_t n, Rng& rng,
                                 Dataset& dataset);

struct InModelSchedule {
  std::int64_t steps = 0;
  const EpsilonSchedule* epsilon = nullptr;
  std::int64_t* epsilon_clock = nullptr;  // advanced by one per step
  int replay_episodes = 0;
};

// In-model episodes from the real d0 (`start` is only asked for initial
// states), one random ensemble member per step, AOH-keyed agent tables
// trained on the model's reward.
void train_agents_in_model(const EnsembleWorldModel& model, const TabularDecPomdp& start, TabularLearner& learner,
                           const InModelSchedule& schedule, Rng& rng);

// Central-state tables trained with VDN on r + lambda * bonus.
void train_exploration_policy(const EnsembleWorldModel& model, const TabularDecPomdp& start, double lambda,
                              TabularLearner& explorer, const InModelSchedule& schedule, Rng& rng);

std::vector<CoverageRecord> coverage_report(const Dataset& dataset, const EnsembleWorldModel& model);

// Mean and standard error of undiscounted episode returns.
MonteCarloEstimate evaluate_test_return(const TabularDecPomdp& env, const JointPolicy& policy, std::int64_t episodes,
                                        Rng& rng);

struct MarcoResult {
  std::shared_ptr<const GreedyQPolicy> policy;
  std::vector<MetricsRow> metrics;
  Dataset dataset;
  std::vector<QTable> agent_tables;
  std::vector<QTable> exploration_tables;
  std::shared_ptr<const EnsembleWorldModel> model;
  std::vector<CoverageRecord> coverage;
  std::int64_t env_steps = 0;
  std::int64_t model_steps = 0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

MarcoResult marco_train(const TabularDecPomdp& env, const MarcoConfig& config, std::uint64_t seed,
                        const MetricsSink& sink = {});

struct BaselineConfig {
  LearnerConfig learner;
  std::int64_t total_samples = 100'000;
  std::int64_t eval_every = 5000;
  std::int64_t eval_episodes = 50;
  double gamma = 0.99;
};

struct BaselineResult {
  std::shared_ptr<const GreedyQPolicy> policy;
  std::vector<MetricsRow> metrics;
};

// Model-free training on the real env with ground-truth availability.
BaselineResult run_baseline(const TabularDecPomdp& env, const BaselineConfig& config, std::uint64_t seed,
                            const MetricsSink& sink = {});

}  // namespace decmarl
