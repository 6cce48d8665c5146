#include "decmarl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace decmarl {

Trajectory run_episode(const TabularDecPomdp& env, const JointPolicy& policy, Rng& rng) {
  const int n = env.num_agents();
  Trajectory traj;
  ResetResult start = reset(env, rng);
  traj.initial_state = start.state;
  std::vector<AgentHistory> histories(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) histories[static_cast<std::size_t>(j)].push_observation(start.observation[static_cast<std::size_t>(j)]);

  StateId s = start.state;
  std::vector<ObsId> obs = std::move(start.observation);
  JointActionId previous = kNoJointAction;
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<ActionMask> masks(static_cast<std::size_t>(n));
  for (int t = 0; t < env.horizon(); ++t) {
    for (int j = 0; j < n; ++j) {
      masks[static_cast<std::size_t>(j)] = env.available(s, j);
      actions[static_cast<std::size_t>(j)] =
          policy.sample(j, histories[static_cast<std::size_t>(j)], masks[static_cast<std::size_t>(j)], rng);
    }
    StepResult res = step(env, s, std::span<const int>(actions), rng);
    Transition tr;
    tr.timestep = t;
    tr.state = s;
    tr.previous_joint_action = previous;
    tr.observation = obs;
    tr.available = masks;
    tr.joint_action = env.encode_action(actions);
    tr.reward = res.reward;
    tr.next_state = res.next_state;
    tr.next_observation = res.observation;
    tr.terminated = res.terminated;
    previous = tr.joint_action;
    traj.transitions.push_back(std::move(tr));
    if (res.terminated) break;
    for (int j = 0; j < n; ++j) {
      auto& h = histories[static_cast<std::size_t>(j)];
      h.push_action(actions[static_cast<std::size_t>(j)]);
      h.push_observation(res.observation[static_cast<std::size_t>(j)]);
    }
    s = res.next_state;
    obs = std::move(res.observation);
  }
  return traj;
}

namespace {

class ExactEvaluator {
 public:
  ExactEvaluator(const TabularDecPomdp& env, const JointPolicy& policy, const ExactOptions& options)
      : env_(env),
        policy_(policy),
        options_(options),
        gamma_(options.gamma < 0.0 ? env.gamma() : options.gamma),
        n_(env.num_agents()),
        histories_(static_cast<std::size_t>(n_)),
        scratch_(static_cast<std::size_t>(env.horizon())) {
    for (auto& sc : scratch_) {
      sc.dists.resize(static_cast<std::size_t>(n_));
      sc.cursor.resize(static_cast<std::size_t>(n_));
      sc.actions.resize(static_cast<std::size_t>(n_));
      sc.obs.resize(static_cast<std::size_t>(n_));
    }
  }

  double evaluate() {
    std::vector<Successor> init;
    env_.initial_states(init);
    return evaluate(init);
  }

  double evaluate(std::vector<Successor> init) {
    if (options_.reverse_order) std::reverse(init.begin(), init.end());
    std::vector<ObsId> obs(static_cast<std::size_t>(n_));
    double total = 0.0;
    for (const auto& e : init) {
      env_.observe(e.state, kNoJointAction, obs);
      for (int j = 0; j < n_; ++j) {
        histories_[static_cast<std::size_t>(j)].clear();
        histories_[static_cast<std::size_t>(j)].push_observation(obs[static_cast<std::size_t>(j)]);
      }
      total += e.probability * value(e.state, 0);
    }
    return total;
  }

 private:
  struct Scratch {
    std::vector<std::vector<ActionProbability>> dists;
    std::vector<std::size_t> cursor;
    std::vector<int> actions;
    std::vector<Successor> successors;
    std::vector<ObsId> obs;
  };

  double value(StateId s, int t) {
    if (t >= env_.horizon()) return 0.0;
    if (++nodes_ > options_.node_budget) {
      std::ostringstream msg;
      msg << "too large for exact evaluation: more than " << options_.node_budget << " history nodes";
      throw BudgetExceeded(msg.str());
    }
    Scratch& sc = scratch_[static_cast<std::size_t>(t)];
    for (int j = 0; j < n_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const ActionMask mask = env_.available(s, j);
      policy_.distribution(j, histories_[ju], mask, sc.dists[ju]);
      for (const auto& e : sc.dists[ju]) {
        if (!mask_contains(mask, e.action)) {
          std::ostringstream msg;
          msg << "policy chose unavailable action " << e.action << " for agent " << j << " in state " << s;
          throw std::invalid_argument(msg.str());
        }
      }
      if (options_.reverse_order) std::reverse(sc.dists[ju].begin(), sc.dists[ju].end());
      sc.cursor[ju] = 0;
    }
    double total = 0.0;
    while (true) {
      double prob = 1.0;
      for (int j = 0; j < n_; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const auto& e = sc.dists[ju][sc.cursor[ju]];
        prob *= e.probability;
        sc.actions[ju] = e.action;
      }
      if (prob > 0.0) total += prob * action_value(s, t, sc);
      // Odometer over the per-agent distributions, last agent fastest.
      int j = n_ - 1;
      while (j >= 0) {
        const auto ju = static_cast<std::size_t>(j);
        if (++sc.cursor[ju] < sc.dists[ju].size()) break;
        sc.cursor[ju] = 0;
        --j;
      }
      if (j < 0) break;
    }
    return total;
  }

  double action_value(StateId s, int t, Scratch& sc) {
    const JointActionId a = env_.encode_action(std::span<const int>(sc.actions));
    double v = env_.reward(s, a).mean;
    const double term = env_.termination(s, a);
    if (t + 1 >= env_.horizon() || term >= 1.0) return v;
    env_.successors(s, a, sc.successors);
    if (options_.reverse_order) std::reverse(sc.successors.begin(), sc.successors.end());
    // Deeper frames use their own scratch, so this row stays intact.
    double continuation = 0.0;
    for (const auto& next : sc.successors) {
      env_.observe(next.state, a, sc.obs);
      for (int j = 0; j < n_; ++j) {
        auto& h = histories_[static_cast<std::size_t>(j)];
        h.push_action(sc.actions[static_cast<std::size_t>(j)]);
        h.push_observation(sc.obs[static_cast<std::size_t>(j)]);
      }
      continuation += next.probability * value(next.state, t + 1);
      for (auto& h : histories_) {
        h.pop();
        h.pop();
      }
    }
    return v + gamma_ * (1.0 - term) * continuation;
  }

  const TabularDecPomdp& env_;
  const JointPolicy& policy_;
  ExactOptions options_;
  double gamma_;
  int n_;
  std::vector<AgentHistory> histories_;
  std::vector<Scratch> scratch_;
  std::int64_t nodes_ = 0;
};

}  // namespace

double evaluate_policy_exact(const TabularDecPomdp& env, const JointPolicy& policy, const ExactOptions& options) {
  ExactEvaluator evaluator(env, policy, options);
  return evaluator.evaluate();
}

double evaluate_policy_exact_from(const TabularDecPomdp& env, const JointPolicy& policy, StateId start,
                                  const ExactOptions& options) {
  ExactEvaluator evaluator(env, policy, options);
  return evaluator.evaluate({{start, 1.0}});
}

MonteCarloEstimate evaluate_policy_mc(const TabularDecPomdp& env, const JointPolicy& policy, std::int64_t num_episodes,
                                      Rng& rng) {
  if (num_episodes < 1) throw std::invalid_argument("evaluate_policy_mc: need at least one episode");
  // Welford accumulation keeps identical returns at exactly zero spread.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < num_episodes; ++i) {
    const double g = run_episode(env, policy, rng).discounted_return(env.gamma());
    const double delta = g - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (g - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  if (num_episodes > 1) {
    const auto n = static_cast<double>(num_episodes);
    est.standard_error = std::sqrt(m2 / (n - 1.0) / n);
  }
  return est;
}

}  // namespace decmarl
