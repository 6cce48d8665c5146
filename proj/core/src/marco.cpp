#include "decmarl/marco.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace decmarl {

namespace {

std::string number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(static_cast<std::size_t>(std::max(0, capacity))) {}

  bool enabled() const { return capacity_ > 0; }
  void add(std::vector<LearnerStep> episode) {
    if (!enabled() || episode.empty()) return;
    episodes_.push_back(std::move(episode));
    if (episodes_.size() > capacity_) episodes_.pop_front();
  }
  void replay(TabularLearner& learner, std::size_t updates, Rng& rng) const {
    if (episodes_.empty()) return;
    for (std::size_t i = 0; i < updates; ++i) {
      const auto& ep = episodes_[rng.uniform_index(episodes_.size())];
      learner.update(ep[rng.uniform_index(ep.size())]);
    }
  }

 private:
  std::size_t capacity_;
  std::deque<std::vector<LearnerStep>> episodes_;
};

// Shared in-model rollout loop. With `central` the tables are keyed by state
// and the reward gains lambda times the (memoized) uncertainty bonus.
void run_in_model(const EnsembleWorldModel& model, const TabularDecPomdp& start, TabularLearner& learner,
                  const InModelSchedule& schedule, bool central, double lambda, Rng& rng) {
  const int n = model.shape().num_agents;
  const int horizon = model.shape().horizon;
  const MixedRadix joint(
      std::vector<std::int64_t>(model.shape().actions_per_agent.begin(), model.shape().actions_per_agent.end()));
  std::unordered_map<PairKey, double, PairKeyHash> bonus;
  ReplayBuffer replay(schedule.replay_episodes);
  std::vector<AgentHistory> histories(static_cast<std::size_t>(n));
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::int64_t local_clock = 0;
  std::int64_t& clock = schedule.epsilon_clock != nullptr ? *schedule.epsilon_clock : local_clock;
  const EpsilonSchedule fallback = EpsilonSchedule::fixed(0.0);
  const EpsilonSchedule& epsilon = schedule.epsilon != nullptr ? *schedule.epsilon : fallback;

  std::int64_t done = 0;
  while (done < schedule.steps) {
    StateId s = start.sample_initial(rng);
    const std::vector<ObsId> obs0 = model.observations().lookup(s, kNoJointAction, n);
    for (int j = 0; j < n; ++j) {
      histories[static_cast<std::size_t>(j)].clear();
      histories[static_cast<std::size_t>(j)].push_observation(obs0[static_cast<std::size_t>(j)]);
    }
    std::vector<LearnerStep> episode;
    for (int t = 0; t < horizon && done < schedule.steps; ++t) {
      LearnerStep step;
      step.keys.resize(static_cast<std::size_t>(n));
      const double eps = epsilon(clock);
      for (int j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        step.keys[ju] = central ? state_context(s) : histories[ju].elements();
        const ActionMask mask = model.available(s, j);
        actions[ju] = epsilon_greedy_action(learner.tables()[ju], step.keys[ju], mask, eps, rng);
      }
      const JointActionId a = joint.encode(std::span<const int>(actions));
      const ModelStep ms = model.sample_step(-1, s, a, rng);
      step.actions = actions;
      step.reward = ms.reward;
      if (central && lambda != 0.0) {
        auto [it, inserted] = bonus.try_emplace(PairKey{s, a}, 0.0);
        if (inserted) it->second = model.uncertainty_bonus(s, a);
        step.reward += lambda * it->second;
      }
      step.terminal = ms.terminated || t + 1 == horizon;
      step.next_keys.resize(static_cast<std::size_t>(n));
      step.next_available.resize(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        histories[ju].push_action(actions[ju]);
        histories[ju].push_observation(ms.observation[ju]);
        step.next_keys[ju] = central ? state_context(ms.next_state) : histories[ju].elements();
        step.next_available[ju] = model.available(ms.next_state, j);
      }
      learner.update(step);
      if (replay.enabled()) episode.push_back(step);
      ++done;
      ++clock;
      s = ms.next_state;
      if (step.terminal) break;
    }
    const std::size_t length = episode.size();
    replay.add(std::move(episode));
    replay.replay(learner, length, rng);
  }
}

double mean_log_uncertainty(const Dataset& dataset, const EnsembleWorldModel& model) {
  if (dataset.distinct_pairs() == 0) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& k : dataset.pairs()) total += std::log(model.uncertainty_bonus(k.state, k.action) + 1e-12);
  return total / static_cast<double>(dataset.distinct_pairs());
}

}  // namespace

void validate(const MarcoConfig& c) {
  if (c.ensemble_size < 1) throw std::invalid_argument("marco: ensemble size must be at least 1");
  if (c.lambda < 0.0) throw std::invalid_argument("marco: lambda must be non-negative");
  if (c.init_random_samples < 1 || c.samples_per_round < 0 || c.model_train_steps_per_round < 0 ||
      c.explore_train_steps_per_round < 0 || c.eval_episodes < 1 || c.eval_interval < 1) {
    throw std::invalid_argument("marco: counts must be non-negative (initial samples and evaluation episodes positive)");
  }
  if (c.env_sample_cap < c.init_random_samples) {
    throw std::invalid_argument("marco: env sample cap is smaller than the initial random samples");
  }
  if (c.samples_per_round == 0 && c.env_sample_cap > c.init_random_samples) {
    throw std::invalid_argument("marco: samples per round must be positive to reach the sample cap");
  }
  if (!(c.collection_epsilon >= 0.0 && c.collection_epsilon <= 1.0)) {
    throw std::invalid_argument("marco: collection epsilon must lie in [0, 1]");
  }
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw std::invalid_argument("marco: gamma must lie in [0, 1]");
}

MarcoConfig marco_defaults(const std::string& env_id) {
  MarcoConfig c;
  if (env_id == "switch_bridge" || env_id == "grid_ref") {
    c.samples_per_round = 10'000;
    c.model_train_steps_per_round = 50'000;
    c.explore_train_steps_per_round = 50'000;
    c.env_sample_cap = 50'000;
  }
  return c;
}

std::string metrics_header() {
  return "seed,round,env_samples,model_steps,test_return_mean,test_return_se,dataset_size,distinct_sa_pairs,"
         "mean_log_uncertainty";
}

std::string metrics_line(const MetricsRow& r) {
  return std::to_string(r.seed) + "," + std::to_string(r.round) + "," + std::to_string(r.env_samples) + "," +
         std::to_string(r.model_steps) + "," + number(r.test_return_mean) + "," + number(r.test_return_se) + "," +
         std::to_string(r.dataset_size) + "," + std::to_string(r.distinct_sa_pairs) + "," +
         number(r.mean_log_uncertainty);
}

std::string coverage_header() { return "state_id,joint_action_flat,visits,log_uncertainty"; }

std::string coverage_line(const CoverageRecord& r) {
  return std::to_string(r.state) + "," + std::to_string(r.joint_action) + "," + std::to_string(r.visits) + "," +
         number(r.log_uncertainty);
}

int TableBehavior::act(int agent, StateId s, const AgentHistory& history, ActionMask available, Rng& rng) const {
  const QTable& table = tables_[static_cast<std::size_t>(agent)];
  if (table.kind() == ContextKind::kCentralState) {
    return epsilon_greedy_action(table, state_context(s), available, epsilon_, rng);
  }
  return epsilon_greedy_action(table, history.elements(), available, epsilon_, rng);
}

std::int64_t collect_env_samples(const TabularDecPomdp& env, const BehaviorPolicy& behavior, std::int64_t n, Rng& rng,
                                 Dataset& dataset) {
  if (n < 0) throw std::invalid_argument("collect_env_samples: negative sample count");
  const int agents = env.num_agents();
  std::vector<AgentHistory> histories(static_cast<std::size_t>(agents));
  std::vector<int> actions(static_cast<std::size_t>(agents));
  std::int64_t taken = 0;
  while (taken < n) {
    ResetResult start = reset(env, rng);
    StateId s = start.state;
    std::vector<ObsId> obs = std::move(start.observation);
    JointActionId previous = kNoJointAction;
    for (int j = 0; j < agents; ++j) {
      histories[static_cast<std::size_t>(j)].clear();
      histories[static_cast<std::size_t>(j)].push_observation(obs[static_cast<std::size_t>(j)]);
    }
    for (int t = 0; t < env.horizon() && taken < n; ++t) {
      Transition tr;
      tr.timestep = t;
      tr.state = s;
      tr.previous_joint_action = previous;
      tr.observation = obs;
      tr.available.resize(static_cast<std::size_t>(agents));
      for (int j = 0; j < agents; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        tr.available[ju] = env.available(s, j);
        actions[ju] = behavior.act(j, s, histories[ju], tr.available[ju], rng);
      }
      StepResult res = step(env, s, std::span<const int>(actions), rng);
      ++taken;
      tr.joint_action = env.encode_action(actions);
      tr.reward = res.reward;
      tr.next_state = res.next_state;
      tr.next_observation = res.observation;
      tr.terminated = res.terminated;
      previous = tr.joint_action;
      dataset.append(std::move(tr));
      if (res.terminated) break;
      for (int j = 0; j < agents; ++j) {
        histories[static_cast<std::size_t>(j)].push_action(actions[static_cast<std::size_t>(j)]);
        histories[static_cast<std::size_t>(j)].push_observation(res.observation[static_cast<std::size_t>(j)]);
      }
      s = res.next_state;
      obs = std::move(res.observation);
    }
  }
  return taken;
}

void train_agents_in_model(const EnsembleWorldModel& model, const TabularDecPomdp& start, TabularLearner& learner,
                           const InModelSchedule& schedule, Rng& rng) {
  run_in_model(model, start, learner, schedule, false, 0.0, rng);
}

void train_exploration_policy(const EnsembleWorldModel& model, const TabularDecPomdp& start, double lambda,
                              TabularLearner& explorer, const InModelSchedule& schedule, Rng& rng) {
  if (!explorer.tables().empty() && explorer.tables().front().kind() != ContextKind::kCentralState) {
    throw std::invalid_argument("train_exploration_policy: exploration tables must be keyed by central state");
  }
  run_in_model(model, start, explorer, schedule, true, lambda, rng);
}

std::vector<CoverageRecord> coverage_report(const Dataset& dataset, const EnsembleWorldModel& model) {
  std::vector<CoverageRecord> out;
  out.reserve(dataset.distinct_pairs());
  for (const auto& k : dataset.pairs()) {
    out.push_back({k.state, k.action, static_cast<std::int64_t>(dataset.visits(k.state, k.action)),
                   std::log(model.uncertainty_bonus(k.state, k.action) + 1e-12)});
  }
  std::sort(out.begin(), out.end(), [](const CoverageRecord& x, const CoverageRecord& y) {
    return std::tie(x.state, x.joint_action) < std::tie(y.state, y.joint_action);
  });
  return out;
}

MonteCarloEstimate evaluate_test_return(const TabularDecPomdp& env, const JointPolicy& policy, std::int64_t episodes,
                                        Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("evaluate_test_return: need at least one episode");
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < episodes; ++i) {
    const double g = run_episode(env, policy, rng).total_reward();
    const double delta = g - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (g - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  if (episodes > 1) {
    const auto n = static_cast<double>(episodes);
    est.standard_error = std::sqrt(m2 / (n - 1.0) / n);
  }
  return est;
}

MarcoResult marco_train(const TabularDecPomdp& env, const MarcoConfig& config, std::uint64_t seed,
                        const MetricsSink& sink) {
  validate(config);
  const Rng root(seed);
  Rng collection_rng = root.fork(streams::kCollection);
  Rng agent_rng = root.fork(streams::kAgentTraining);
  Rng explore_rng = root.fork(streams::kExploration);
  const Rng fit_root = root.fork(streams::kModelFit);
  const Rng eval_root = root.fork(streams::kEvaluation);
  const StepCountingEnv real(env);

  MarcoResult result;
  TabularLearner agents(config.learner.kind, ContextKind::kAoh, env.shape().actions_per_agent, config.learner.alpha,
                        config.gamma, config.learner.target_sync);
  TabularLearner explorer(LearnerKind::kVdn, ContextKind::kCentralState, env.shape().actions_per_agent,
                          config.explorer.alpha, config.gamma, config.explorer.target_sync);
  std::int64_t agent_clock = 0;
  std::int64_t explore_clock = 0;

  result.env_steps += collect_env_samples(real, UniformBehavior(), config.init_random_samples, collection_rng, result.dataset);
  for (int round = 0;; ++round) {
    Rng fit_rng = fit_root.fork(static_cast<std::uint64_t>(round));
    FitOptions fit;
    fit.members = config.ensemble_size;
    fit.bootstrap = config.bootstrap;
    auto model = std::make_shared<const EnsembleWorldModel>(fit_ensemble(result.dataset, env.shape(), fit, fit_rng));

    train_agents_in_model(*model, env, agents,
                          {config.model_train_steps_per_round, &config.learner.epsilon, &agent_clock,
                           config.learner.replay_episodes},
                          agent_rng);
    result.model_steps += config.model_train_steps_per_round;
    if (config.use_exploration_policy) {
      train_exploration_policy(*model, env, config.lambda, explorer,
                               {config.explore_train_steps_per_round, &config.explorer.epsilon, &explore_clock,
                                config.explorer.replay_episodes},
                               explore_rng);
    }

    const bool last = result.env_steps >= config.env_sample_cap;
    if (round % config.eval_interval == 0 || last) {
      GreedyQPolicy greedy(agents.tables());
      Rng eval_rng = eval_root.fork(static_cast<std::uint64_t>(round));
      const MonteCarloEstimate test = evaluate_test_return(env, greedy, config.eval_episodes, eval_rng);
      MetricsRow row;
      row.seed = seed;
      row.round = round;
      row.env_samples = result.env_steps;
      row.model_steps = result.model_steps;
      row.test_return_mean = test.mean;
      row.test_return_se = test.standard_error;
      row.dataset_size = static_cast<std::int64_t>(result.dataset.size());
      row.distinct_sa_pairs = static_cast<std::int64_t>(result.dataset.distinct_pairs());
      row.mean_log_uncertainty = mean_log_uncertainty(result.dataset, *model);
      result.metrics.push_back(row);
      if (sink) sink(row);
    }
    result.model = model;
    if (last) break;

    const std::int64_t n = std::min(config.samples_per_round, config.env_sample_cap - result.env_steps);
    if (config.use_exploration_policy) {
      result.env_steps += collect_env_samples(real, TableBehavior(explorer.tables(), config.collection_epsilon), n,
                                              collection_rng, result.dataset);
    } else {
      result.env_steps += collect_env_samples(real, TableBehavior(agents.tables(), config.collection_epsilon), n,
                                              collection_rng, result.dataset);
    }
  }
  if (real.steps() != result.env_steps || static_cast<std::int64_t>(result.dataset.size()) != result.env_steps) {
    throw std::logic_error("marco: real-environment sample accounting is inconsistent");
  }
  result.agent_tables = agents.tables();
  result.exploration_tables = explorer.tables();
  result.policy = extract_greedy_policy(result.agent_tables);
  result.coverage = coverage_report(result.dataset, *result.model);
  return result;
}

BaselineResult run_baseline(const TabularDecPomdp& env, const BaselineConfig& config, std::uint64_t seed,
                            const MetricsSink& sink) {
  if (config.total_samples < 0 || config.eval_every < 1 || config.eval_episodes < 1) {
    throw std::invalid_argument("baseline: sample counts must be non-negative and evaluation settings positive");
  }
  const Rng root(seed);
  Rng train_rng = root.fork(streams::kAgentTraining);
  const Rng eval_root = root.fork(streams::kEvaluation);
  TabularLearner agents(config.learner.kind, ContextKind::kAoh, env.shape().actions_per_agent, config.learner.alpha,
                        config.gamma, config.learner.target_sync);
  ReplayBuffer replay(config.learner.replay_episodes);
  BaselineResult result;
  std::int64_t samples = 0;
  int evaluation = 0;
  std::int64_t next_eval = 0;
  std::unordered_map<PairKey, char, PairKeyHash> seen;

  auto evaluate = [&]() {
    GreedyQPolicy greedy(agents.tables());
    Rng eval_rng = eval_root.fork(static_cast<std::uint64_t>(evaluation));
    const MonteCarloEstimate test = evaluate_test_return(env, greedy, config.eval_episodes, eval_rng);
    MetricsRow row;
    row.seed = seed;
    row.round = evaluation++;
    row.env_samples = samples;
    row.test_return_mean = test.mean;
    row.test_return_se = test.standard_error;
    row.dataset_size = samples;
    row.distinct_sa_pairs = static_cast<std::int64_t>(seen.size());
    row.mean_log_uncertainty = std::numeric_limits<double>::quiet_NaN();
    result.metrics.push_back(row);
    if (sink) sink(row);
    next_eval += config.eval_every;
  };

  const int n = env.num_agents();
  std::vector<AgentHistory> histories(static_cast<std::size_t>(n));
  std::vector<int> actions(static_cast<std::size_t>(n));
  evaluate();
  while (samples < config.total_samples) {
    ResetResult start = reset(env, train_rng);
    StateId s = start.state;
    for (int j = 0; j < n; ++j) {
      histories[static_cast<std::size_t>(j)].clear();
      histories[static_cast<std::size_t>(j)].push_observation(start.observation[static_cast<std::size_t>(j)]);
    }
    std::vector<LearnerStep> episode;
    for (int t = 0; t < env.horizon() && samples < config.total_samples; ++t) {
      LearnerStep step;
      step.keys.resize(static_cast<std::size_t>(n));
      const double eps = config.learner.epsilon(samples);
      for (int j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        step.keys[ju] = histories[ju].elements();
        actions[ju] = epsilon_greedy_action(agents.tables()[ju], step.keys[ju], env.available(s, j), eps, train_rng);
      }
      const StepResult res = decmarl::step(env, s, std::span<const int>(actions), train_rng);
      ++samples;
      seen.try_emplace(PairKey{s, env.encode_action(actions)}, 1);
      step.actions = actions;
      step.reward = res.reward;
      step.terminal = res.terminated || t + 1 == env.horizon();
      step.next_keys.resize(static_cast<std::size_t>(n));
      step.next_available.resize(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        histories[ju].push_action(actions[ju]);
        histories[ju].push_observation(res.observation[ju]);
        step.next_keys[ju] = histories[ju].elements();
        step.next_available[ju] = env.available(res.next_state, j);
      }
      agents.update(step);
      if (replay.enabled()) episode.push_back(step);
      if (samples >= next_eval) evaluate();
      s = res.next_state;
      if (step.terminal) break;
    }
    const std::size_t length = episode.size();
    replay.add(std::move(episode));
    replay.replay(agents, length, train_rng);
  }
  if (result.metrics.back().env_samples != samples) evaluate();
  result.policy = extract_greedy_policy(agents.tables());
  return result;
}

}  // namespace decmarl
