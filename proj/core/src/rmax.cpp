#include "decmarl/rmax.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "decmarl/evaluation.hpp"

namespace decmarl {

namespace {

void require_unit_rewards(const TabularDecPomdp& base) {
  const RewardBounds b = base.reward_bounds();
  if (b.min < 0.0 || b.max > 1.0) {
    throw std::invalid_argument("R-MAX assumes bounded rewards 0 <= r <= 1; normalize the environment's rewards first");
  }
}

// Shared skeleton of D̂_K: sink state, full availability, true d0, and the
// unknown-pair rows. `fill` writes the rows of known pairs.
DecPomdpTables known_skeleton(const TabularDecPomdp& base) {
  DecPomdpShape shape = base.shape();
  shape.num_states = base.num_states() + 1;
  DecPomdpTables t = DecPomdpTables::allocate("known", shape);
  t.reward_bounds = {0.0, 1.0};
  std::vector<Successor> init;
  base.initial_states(init);
  for (const auto& e : init) t.initial[static_cast<std::size_t>(e.state)] += e.probability;
  const StateId sink = base.num_states();
  for (std::size_t i = 0; i < t.transitions.size(); ++i) {
    t.transitions[i] = {{sink, 1.0}};
    t.rewards[i] = {1.0, 0.0};
    t.terminations[i] = 0.0;
  }
  return t;
}

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

RmaxCounts::RmaxCounts(DecPomdpShape shape, std::int64_t m) : shape_(std::move(shape)), m_(m) {
  if (m < 1) throw std::invalid_argument("R-MAX: m must be at least 1");
}

std::int64_t RmaxCounts::count(StateId s, JointActionId a) const {
  const PairStatistics* st = stats_.find(s, a);
  return st == nullptr ? 0 : st->count;
}

bool RmaxCounts::record(const Transition& t) {
  if (t.reward < 0.0 || t.reward > 1.0) {
    throw std::invalid_argument("R-MAX assumes bounded rewards 0 <= r <= 1; observed reward " + std::to_string(t.reward));
  }
  observations_.record(t.state, t.previous_joint_action, t.observation);
  observations_.record(t.next_state, t.joint_action, t.next_observation);
  if (count(t.state, t.joint_action) >= m_) return false;
  stats_.add(t.state, t.joint_action, t.reward, t.next_state, t.terminated);
  if (count(t.state, t.joint_action) == m_) {
    ++num_known_;
    return true;
  }
  return false;
}

std::shared_ptr<const KnownDecPomdp> build_known_decpomdp(const RmaxCounts& counts, const TabularDecPomdp& base) {
  require_unit_rewards(base);
  if (!(counts.shape() == base.shape())) throw std::invalid_argument("build_known_decpomdp: counts and env disagree on shape");
  DecPomdpTables t = known_skeleton(base);
  PolicySpace space = base.policy_space();
  const StateId num_states = base.num_states();
  const JointActionId num_actions = base.num_joint_actions();
  const int n = base.num_agents();
  for (StateId s = 0; s < num_states; ++s) {
    for (JointActionId a = 0; a < num_actions; ++a) {
      if (!counts.known(s, a)) continue;
      const PairStatistics& st = *counts.statistics().find(s, a);
      const auto i = t.pair_index(s, a);
      t.transitions[i] = counts.statistics().dynamics(s, a);
      t.rewards[i] = {st.reward_mean(), 0.0};
      t.terminations[i] = st.termination_probability();
    }
    for (JointActionId prev = kNoJointAction; prev < num_actions; ++prev) {
      const std::vector<ObsId>* seen = counts.observations().find(s, prev);
      for (int j = 0; j < n; ++j) {
        ObsId o = 0;
        if (seen != nullptr) o = (*seen)[static_cast<std::size_t>(j)];
        else if (prev == kNoJointAction) o = space.agents[static_cast<std::size_t>(j)].initial_observations.front();
        t.observations[t.observation_index(s, prev, j)] = o;
      }
    }
  }
  return std::make_shared<KnownDecPomdp>(std::move(t), std::move(space));
}

std::shared_ptr<const KnownDecPomdp> build_idealized_known(const TabularDecPomdp& base, const KnownPredicate& known) {
  require_unit_rewards(base);
  DecPomdpTables t = known_skeleton(base);
  const StateId num_states = base.num_states();
  const JointActionId num_actions = base.num_joint_actions();
  const int n = base.num_agents();
  std::vector<ObsId> obs(static_cast<std::size_t>(n));
  for (StateId s = 0; s < num_states; ++s) {
    for (JointActionId a = 0; a < num_actions; ++a) {
      if (!known(s, a)) continue;
      const auto i = t.pair_index(s, a);
      base.successors(s, a, t.transitions[i]);
      t.rewards[i] = {base.reward(s, a).mean, 0.0};
      t.terminations[i] = base.termination(s, a);
    }
    for (JointActionId prev = kNoJointAction; prev < num_actions; ++prev) {
      base.observe(s, prev, obs);
      for (int j = 0; j < n; ++j) t.observations[t.observation_index(s, prev, j)] = obs[static_cast<std::size_t>(j)];
    }
  }
  return std::make_shared<KnownDecPomdp>(std::move(t), base.policy_space());
}

PlanMode parse_plan_mode(const std::string& name) {
  if (name == "auto") return PlanMode::kAuto;
  if (name == "exact") return PlanMode::kExact;
  if (name == "mc" || name == "monte-carlo") return PlanMode::kMonteCarlo;
  throw std::invalid_argument("unknown planning mode '" + name + "' (expected auto, exact or mc)");
}

PlanResult plan_in_model(const TabularDecPomdp& model, const PlanOptions& options, Rng& rng) {
  const PolicySpace space = model.policy_space();
  PolicyEnumerator policies(space, options.budget);
  bool exact = options.mode == PlanMode::kExact ||
               (options.mode == PlanMode::kAuto && policies.count() <= options.exact_limit);
  if (!exact && options.rollouts < 1) throw std::invalid_argument("plan_in_model: need at least one rollout");
  PlanResult best{policies.current(), 0.0, 0, exact};
  bool first = true;
  // Rollout i starts from the same generator under every policy.
  const Rng rollout_root(exact ? 0 : rng.next());
  auto rollout_mean = [&](const JointPolicy& policy) {
    double total = 0.0;
    for (std::int64_t i = 0; i < options.rollouts; ++i) {
      Rng episode = rollout_root.fork(static_cast<std::uint64_t>(i));
      total += run_episode(model, policy, episode).discounted_return(model.gamma());
    }
    return total / static_cast<double>(options.rollouts);
  };
  do {
    const double v = exact ? evaluate_policy_exact(model, policies.current()) : rollout_mean(policies.current());
    ++best.evaluated;
    if (first || v > best.value) {
      best.policy = policies.current();
      best.value = v;
      first = false;
    }
  } while (policies.advance());
  return best;
}

std::string rmax_header() { return "episode,env_steps_cumulative,known_pairs,return,replanned"; }

std::string rmax_line(const RmaxEpisode& r) {
  return std::to_string(r.episode) + "," + std::to_string(r.env_steps_cumulative) + "," + std::to_string(r.known_pairs) +
         "," + number(r.episode_return) + "," + (r.replanned ? "1" : "0");
}

RmaxResult rmax_run(const TabularDecPomdp& env, const RmaxConfig& config, std::uint64_t seed, const RmaxSink& sink) {
  require_unit_rewards(env);
  if (config.max_episodes < 0) throw std::invalid_argument("R-MAX: episode count must be non-negative");
  const Rng root(seed);
  Rng env_rng = root.fork(streams::kEnvironment);
  Rng plan_rng = root.fork(streams::kPlanning);
  RmaxCounts counts(env.shape(), config.m);
  PlanResult plan = plan_in_model(*build_known_decpomdp(counts, env), config.plan, plan_rng);
  RmaxResult result{plan.policy, plan.value, {}, 0, 0, 0};

  const int n = env.num_agents();
  std::vector<AgentHistory> histories(static_cast<std::size_t>(n));
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (std::int64_t ep = 0; ep < config.max_episodes; ++ep) {
    ResetResult start = reset(env, env_rng);
    StateId s = start.state;
    std::vector<ObsId> obs = std::move(start.observation);
    JointActionId previous = kNoJointAction;
    for (int j = 0; j < n; ++j) {
      histories[static_cast<std::size_t>(j)].clear();
      histories[static_cast<std::size_t>(j)].push_observation(obs[static_cast<std::size_t>(j)]);
    }
    RmaxEpisode row;
    row.episode = ep;
    double discount = 1.0;
    for (int t = 0; t < env.horizon(); ++t) {
      Transition tr;
      tr.timestep = t;
      tr.state = s;
      tr.previous_joint_action = previous;
      tr.observation = obs;
      tr.available.resize(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        tr.available[ju] = env.available(s, j);
        actions[ju] = result.policy.action(j, histories[ju], tr.available[ju]);
      }
      StepResult res = step(env, s, std::span<const int>(actions), env_rng);
      ++result.env_steps;
      row.episode_return += discount * res.reward;
      discount *= env.gamma();
      tr.joint_action = env.encode_action(actions);
      tr.reward = res.reward;
      tr.next_state = res.next_state;
      tr.next_observation = res.observation;
      tr.terminated = res.terminated;
      previous = tr.joint_action;
      if (counts.record(tr)) {
        plan = plan_in_model(*build_known_decpomdp(counts, env), config.plan, plan_rng);
        result.policy = plan.policy;
        result.model_value = plan.value;
        ++result.replans;
        row.replanned = true;
      }
      if (res.terminated) break;
      for (int j = 0; j < n; ++j) {
        histories[static_cast<std::size_t>(j)].push_action(actions[static_cast<std::size_t>(j)]);
        histories[static_cast<std::size_t>(j)].push_observation(res.observation[static_cast<std::size_t>(j)]);
      }
      s = res.next_state;
      obs = std::move(res.observation);
    }
    row.env_steps_cumulative = result.env_steps;
    row.known_pairs = counts.num_known();
    result.episodes.push_back(row);
    if (sink) sink(row);
  }
  result.known_pairs = counts.num_known();
  return result;
}

std::uint64_t theoretical_m(double epsilon, double delta, std::int64_t num_states, std::int64_t num_joint_actions,
                            double gamma, double constant) {
  if (!(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("theoretical_m: epsilon and delta must lie in (0, 1)");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("theoretical_m: gamma must lie in [0, 1)");
  const double v_max = 1.0 / (1.0 - gamma);
  const auto s = static_cast<double>(num_states);
  const auto a = static_cast<double>(num_joint_actions);
  const double m = constant * v_max * v_max * (s + std::log(s * a / delta)) /
                   (epsilon * epsilon * (1.0 - gamma) * (1.0 - gamma));
  return static_cast<std::uint64_t>(std::ceil(m));
}

}  // namespace decmarl
