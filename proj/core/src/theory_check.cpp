#include "decmarl/theory_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>

#include "decmarl/enumeration.hpp"
#include "decmarl/evaluation.hpp"
#include "decmarl/parallel.hpp"

namespace decmarl {

namespace {

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

// Product distribution over joint actions at one node.
struct JointChoice {
  std::vector<int> actions;
  double probability = 1.0;
};

void joint_choices(const TabularDecPomdp& env, const JointPolicy& policy, StateId s,
                   const std::vector<AgentHistory>& histories, std::vector<JointChoice>& out) {
  out.assign(1, JointChoice{});
  std::vector<ActionProbability> dist;
  for (int j = 0; j < env.num_agents(); ++j) {
    policy.distribution(j, histories[static_cast<std::size_t>(j)], env.available(s, j), dist);
    std::vector<JointChoice> next;
    next.reserve(out.size() * dist.size());
    for (const auto& prefix : out) {
      for (const auto& e : dist) {
        if (e.probability <= 0.0) continue;
        JointChoice c = prefix;
        c.actions.push_back(e.action);
        c.probability *= e.probability;
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
}

void push_step(std::vector<AgentHistory>& histories, const std::vector<int>& actions, const std::vector<ObsId>& obs) {
  for (std::size_t j = 0; j < histories.size(); ++j) {
    histories[j].push_action(actions[j]);
    histories[j].push_observation(obs[j]);
  }
}

void pop_step(std::vector<AgentHistory>& histories) {
  for (auto& h : histories) {
    h.pop();
    h.pop();
  }
}

std::vector<AgentHistory> start_histories(const TabularDecPomdp& env, StateId s) {
  std::vector<AgentHistory> h(static_cast<std::size_t>(env.num_agents()));
  const std::vector<ObsId> obs = env.observe(s, kNoJointAction);
  for (std::size_t j = 0; j < h.size(); ++j) h[j].push_observation(obs[j]);
  return h;
}

// Values of one policy in D and D_hat over the union of their reachable trees.
class PairedEvaluator {
 public:
  PairedEvaluator(const TabularDecPomdp& d, const TabularDecPomdp& d_hat, const JointPolicy& policy)
      : d_(d), d_hat_(d_hat), policy_(policy) {}

  double max_gap() {
    std::vector<Successor> init;
    d_.initial_states(init);
    std::vector<Successor> init_hat;
    d_hat_.initial_states(init_hat);
    for (const auto& e : init_hat) init.push_back(e);
    for (const auto& e : init) {
      histories_ = start_histories(d_, e.state);
      value(e.state, 0);
    }
    return max_gap_;
  }

 private:
  std::pair<double, double> value(StateId s, int t) {
    std::vector<JointChoice> choices;
    joint_choices(d_, policy_, s, histories_, choices);
    double v = 0.0, v_hat = 0.0;
    std::vector<Successor> row, row_hat;
    for (const auto& c : choices) {
      const JointActionId a = d_.encode_action(c.actions);
      double q = d_.reward(s, a).mean;
      double q_hat = d_hat_.reward(s, a).mean;
      const double term = d_.termination(s, a);
      if (t + 1 < d_.horizon() && term < 1.0) {
        d_.successors(s, a, row);
        d_hat_.successors(s, a, row_hat);
        std::vector<StateId> support;
        for (const auto& e : row) support.push_back(e.state);
        for (const auto& e : row_hat) support.push_back(e.state);
        std::sort(support.begin(), support.end());
        support.erase(std::unique(support.begin(), support.end()), support.end());
        double cont = 0.0, cont_hat = 0.0;
        for (StateId next : support) {
          const double p = probability_of(row, next);
          const double p_hat = probability_of(row_hat, next);
          push_step(histories_, c.actions, d_.observe(next, a));
          const auto [w, w_hat] = value(next, t + 1);
          pop_step(histories_);
          cont += p * w;
          cont_hat += p_hat * w_hat;
        }
        q += d_.gamma() * (1.0 - term) * cont;
        q_hat += d_.gamma() * (1.0 - term) * cont_hat;
      }
      v += c.probability * q;
      v_hat += c.probability * q_hat;
    }
    max_gap_ = std::max(max_gap_, std::abs(v - v_hat));
    return {v, v_hat};
  }

  static double probability_of(const std::vector<Successor>& row, StateId s) {
    for (const auto& e : row) {
      if (e.state == s) return e.probability;
    }
    return 0.0;
  }

  const TabularDecPomdp& d_;
  const TabularDecPomdp& d_hat_;
  const JointPolicy& policy_;
  std::vector<AgentHistory> histories_;
  double max_gap_ = 0.0;
};

class EscapeEvaluator {
 public:
  EscapeEvaluator(const TabularDecPomdp& d, const JointPolicy& policy, const KnownPredicate& known)
      : d_(d), policy_(policy), known_(known) {}

  double evaluate() {
    std::vector<Successor> init;
    d_.initial_states(init);
    double total = 0.0;
    for (const auto& e : init) {
      histories_ = start_histories(d_, e.state);
      total += e.probability * escape(e.state, 0);
    }
    return total;
  }

 private:
  double escape(StateId s, int t) {
    std::vector<JointChoice> choices;
    joint_choices(d_, policy_, s, histories_, choices);
    double total = 0.0;
    std::vector<Successor> row;
    for (const auto& c : choices) {
      const JointActionId a = d_.encode_action(c.actions);
      if (!known_(s, a)) {
        total += c.probability;
        continue;
      }
      const double term = d_.termination(s, a);
      if (t + 1 >= d_.horizon() || term >= 1.0) continue;
      d_.successors(s, a, row);
      const std::vector<Successor> successors = row;
      double cont = 0.0;
      for (const auto& e : successors) {
        push_step(histories_, c.actions, d_.observe(e.state, a));
        cont += e.probability * escape(e.state, t + 1);
        pop_step(histories_);
      }
      total += c.probability * (1.0 - term) * cont;
    }
    return total;
  }

  const TabularDecPomdp& d_;
  const JointPolicy& policy_;
  const KnownPredicate& known_;
  std::vector<AgentHistory> histories_;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

EpsilonBounds epsilon_bounds(std::int64_t m, double delta, std::int64_t num_states, std::int64_t num_joint_actions) {
  if (m < 1) throw std::invalid_argument("epsilon_bounds: m must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("epsilon_bounds: delta must lie in (0, 1)");
  if (num_states < 1 || num_joint_actions < 1) throw std::invalid_argument("epsilon_bounds: sizes must be positive");
  const auto s = static_cast<double>(num_states);
  const auto a = static_cast<double>(num_joint_actions);
  const auto md = static_cast<double>(m);
  EpsilonBounds b;
  b.epsilon_r = std::sqrt(std::log(4.0 * s * a / delta) / (2.0 * md));
  if (num_states >= 2) {
    // ln(2^S - 2) = S ln 2 + ln(1 - 2^(1 - S)).
    const double log_subsets = s * std::log(2.0) + std::log1p(-std::exp2(1.0 - s));
    const double inner = log_subsets + std::log(2.0 * s * a / delta);
    b.epsilon_p = std::sqrt(std::max(0.0, 2.0 / md * inner));
  }
  return b;
}

double simulation_bound(double epsilon_r, double epsilon_p, double gamma) {
  return epsilon_r / (1.0 - gamma) + gamma * epsilon_p * v_max(gamma) / (2.0 * (1.0 - gamma));
}

double theorem_epsilon(const EpsilonBounds& b, double gamma) {
  return 2.0 * b.epsilon_r / (1.0 - gamma) + gamma * b.epsilon_p * v_max(gamma) / (1.0 - gamma);
}

void BoundReport::add(const BoundTrial& trial) { trials_.push_back(trial); }

std::int64_t BoundReport::violations() const {
  return std::count_if(trials_.begin(), trials_.end(), [](const BoundTrial& t) { return t.violated(); });
}

double BoundReport::max_slack() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : trials_) best = std::max(best, t.slack());
  return best;
}

std::string BoundReport::csv() const {
  std::ostringstream out;
  out << "trial,lhs,rhs,slack,violated\n";
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    const auto& t = trials_[i];
    out << i << ',' << number(t.lhs) << ',' << number(t.rhs) << ',' << number(t.slack()) << ','
        << (t.violated() ? 1 : 0) << '\n';
  }
  return out.str();
}

TableDeviation max_deviation(const DecPomdpTables& a, const DecPomdpTables& b) {
  if (!(a.shape == b.shape)) throw std::invalid_argument("max_deviation: models differ in shape");
  TableDeviation dev;
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    dev.epsilon_r = std::max(dev.epsilon_r, std::abs(a.rewards[i].mean - b.rewards[i].mean));
    std::vector<double> pa(static_cast<std::size_t>(a.shape.num_states), 0.0);
    for (const auto& e : a.transitions[i]) pa[static_cast<std::size_t>(e.state)] += e.probability;
    for (const auto& e : b.transitions[i]) pa[static_cast<std::size_t>(e.state)] -= e.probability;
    double l1 = 0.0;
    for (double x : pa) l1 += std::abs(x);
    dev.epsilon_p = std::max(dev.epsilon_p, l1);
  }
  return dev;
}

DecPomdpTables perturb_tables(const DecPomdpTables& tables, double eta, double jitter, Rng& rng) {
  DecPomdpTables out = tables;
  const auto num_states = static_cast<std::size_t>(tables.shape.num_states);
  for (std::size_t i = 0; i < out.transitions.size(); ++i) {
    std::vector<double> mix(num_states, 0.0);
    double total = 0.0;
    for (auto& x : mix) {
      x = rng.exponential();
      total += x;
    }
    std::vector<double> row(num_states, 0.0);
    for (const auto& e : tables.transitions[i]) row[static_cast<std::size_t>(e.state)] = (1.0 - eta) * e.probability;
    for (std::size_t s = 0; s < num_states; ++s) row[s] += total > 0.0 ? eta * mix[s] / total : eta / num_states;
    out.transitions[i].clear();
    for (std::size_t s = 0; s < num_states; ++s) {
      if (row[s] > 0.0) out.transitions[i].push_back({static_cast<StateId>(s), row[s]});
    }
    RewardSpec& r = out.rewards[i];
    r.mean = std::clamp(r.mean + jitter * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
    r.noise = 0.0;
  }
  for (auto& r : out.rewards) r.noise = 0.0;
  return out;
}

BoundTrial check_simulation_policy(const ExplicitDecPomdp& d, const ExplicitDecPomdp& d_hat, const JointPolicy& policy) {
  if (!(d.shape() == d_hat.shape())) throw std::invalid_argument("check_simulation_policy: models differ in shape");
  const TableDeviation dev = max_deviation(d.tables(), d_hat.tables());
  PairedEvaluator paired(d, d_hat, policy);
  return {paired.max_gap(), simulation_bound(dev.epsilon_r, dev.epsilon_p, d.gamma())};
}

BoundTrial check_simulation_optimal(const ExplicitDecPomdp& d, const ExplicitDecPomdp& d_hat, std::uint64_t budget) {
  if (!(d.shape() == d_hat.shape())) throw std::invalid_argument("check_simulation_optimal: models differ in shape");
  const TableDeviation dev = max_deviation(d.tables(), d_hat.tables());
  std::vector<Successor> init;
  d.initial_states(init);
  std::vector<double> best(init.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> best_hat = best;
  PolicyEnumerator policies(d.policy_space(), budget);
  do {
    for (std::size_t i = 0; i < init.size(); ++i) {
      best[i] = std::max(best[i], evaluate_policy_exact_from(d, policies.current(), init[i].state));
      best_hat[i] = std::max(best_hat[i], evaluate_policy_exact_from(d_hat, policies.current(), init[i].state));
    }
  } while (policies.advance());
  double gap = 0.0;
  for (std::size_t i = 0; i < init.size(); ++i) gap = std::max(gap, std::abs(best[i] - best_hat[i]));
  return {gap, simulation_bound(dev.epsilon_r, dev.epsilon_p, d.gamma())};
}

BoundTrial check_optimism(const TabularDecPomdp& d, const KnownPredicate& known, std::uint64_t budget) {
  const auto d_k = build_idealized_known(d, known);
  PolicyEnumerator policies(d.policy_space(), budget);
  BoundTrial worst{0.0, 0.0};
  bool first = true;
  do {
    const double j_d = evaluate_policy_exact(d, policies.current());
    const double j_k = evaluate_policy_exact(*d_k, policies.current());
    if (first || j_d - j_k > worst.slack()) {
      worst = {j_d, j_k};
      first = false;
    }
  } while (policies.advance());
  return worst;
}

double escape_probability(const TabularDecPomdp& d, const JointPolicy& policy, const KnownPredicate& known) {
  EscapeEvaluator evaluator(d, policy, known);
  return evaluator.evaluate();
}

double escape_frequency(const TabularDecPomdp& d, const JointPolicy& policy, const KnownPredicate& known,
                        std::int64_t episodes, Rng& rng) {
  std::int64_t escaped = 0;
  for (std::int64_t i = 0; i < episodes; ++i) {
    const Trajectory traj = run_episode(d, policy, rng);
    for (const auto& t : traj.transitions) {
      if (!known(t.state, t.joint_action)) {
        ++escaped;
        break;
      }
    }
  }
  return static_cast<double>(escaped) / static_cast<double>(episodes);
}

BoundTrial check_induced_inequality(const TabularDecPomdp& d, const KnownPredicate& known, const JointPolicy& policy) {
  const auto d_k = build_idealized_known(d, known);
  const double gap = std::abs(evaluate_policy_exact(d, policy) - evaluate_policy_exact(*d_k, policy));
  return {gap, v_max(d.gamma()) * escape_probability(d, policy, known)};
}

std::string CoverageResult::csv() const {
  std::ostringstream out;
  out << "trial,max_reward_error,epsilon_r,max_l1_error,epsilon_p,failed\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    out << i << ',' << number(t.max_reward_error) << ',' << number(bounds.epsilon_r) << ',' << number(t.max_l1_error)
        << ',' << number(bounds.epsilon_p) << ',' << (t.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

CoverageResult check_model_error_coverage(const TabularDecPomdp& env, std::int64_t m, double delta,
                                          std::int64_t trials, std::uint64_t seed, int workers) {
  if (trials < 1) throw std::invalid_argument("coverage check needs at least one trial");
  CoverageResult result;
  result.m = m;
  result.delta = delta;
  result.bounds = epsilon_bounds(m, delta, env.num_states(), env.num_joint_actions());
  result.trials.resize(static_cast<std::size_t>(trials));
  const Rng base = Rng(seed).fork(streams::kInstances);
  parallel_for(trials, workers, [&](std::int64_t k) {
    Rng rng = base.fork(static_cast<std::uint64_t>(k));
    EmpiricalModel model;
    std::vector<PairKey> pairs;
    for (StateId s = 0; s < env.num_states(); ++s) {
      for (JointActionId a = 0; a < env.num_joint_actions(); ++a) {
        const RewardSpec r = env.reward(s, a);
        for (std::int64_t i = 0; i < m; ++i) {
          const StateId next = env.sample_successor(s, a, rng);
          model.add(s, a, sample_reward(r, rng), next, false);
        }
        pairs.push_back({s, a});
      }
    }
    const ModelError err = model_error(model, env, pairs);
    CoverageTrial& t = result.trials[static_cast<std::size_t>(k)];
    t.max_reward_error = err.max_abs_reward;
    t.max_l1_error = err.max_l1_dynamics;
    t.failed = err.max_abs_reward > result.bounds.epsilon_r || err.max_l1_dynamics > result.bounds.epsilon_p;
  });
  for (const auto& t : result.trials) result.failures += t.failed ? 1 : 0;
  result.failure_fraction = static_cast<double>(result.failures) / static_cast<double>(trials);
  const boost::math::binomial_distribution<double> null_model(static_cast<double>(trials), delta);
  result.threshold = boost::math::quantile(null_model, 0.99) / static_cast<double>(trials);
  return result;
}

DecPomdpTables random_theory_instance(Rng& rng, std::uint64_t max_policies) {
  RandomDecPomdpSpec spec;
  spec.num_agents = 2;
  spec.num_states = 1 + static_cast<StateId>(rng.uniform_index(5));
  spec.actions_per_agent = {1 + static_cast<int>(rng.uniform_index(2)), 1 + static_cast<int>(rng.uniform_index(2))};
  spec.obs_per_agent = {1 + static_cast<ObsId>(rng.uniform_index(2)), 1 + static_cast<ObsId>(rng.uniform_index(2))};
  spec.horizon = 1 + static_cast<int>(rng.uniform_index(4));
  spec.gamma = 0.9;
  spec.termination_rate = 0.5 * rng.uniform();
  spec.blank_initial_observation = rng.bernoulli(0.5);
  DecPomdpTables tables = random_decpomdp_tables(spec, rng);
  if (max_policies > 0) {
    const ExplicitDecPomdp probe(tables);
    PolicySpace space = probe.policy_space();
    while (!count_joint_policies(space).at_most(max_policies)) {
      space.horizon = 1 + static_cast<int>(rng.uniform_index(4));
    }
    tables.shape.horizon = space.horizon;
  }
  return tables;
}

std::vector<char> random_known_set(const TabularDecPomdp& env, Rng& rng) {
  const double rate = rng.uniform();
  std::vector<char> known(static_cast<std::size_t>(env.num_states() * env.num_joint_actions()));
  for (auto& k : known) k = rng.bernoulli(rate) ? 1 : 0;
  return known;
}

CampaignConfig CampaignConfig::with_trials(std::int64_t trials) {
  if (trials < 1) throw std::invalid_argument("campaign needs at least one trial");
  CampaignConfig c;
  auto scale = [&](std::int64_t base) { return std::max<std::int64_t>(1, base * trials / 1000); };
  c.simulation_policy_trials = scale(1000);
  c.simulation_optimal_trials = scale(200);
  c.optimism_trials = scale(500);
  c.induced_trials = scale(1000);
  c.coverage_trials = std::max<std::int64_t>(100, scale(500));
  c.escape_spot_checks = scale(50);
  return c;
}

std::int64_t CampaignResult::violations() const {
  std::int64_t total = 0;
  for (const auto& r : reports) total += r.violations();
  return total;
}

bool CampaignResult::passed() const { return violations() == 0 && coverage.passed(); }

std::string CampaignResult::summary_csv() const {
  std::ostringstream out;
  out << "check,trials,violations,max_slack,passed\n";
  for (const auto& r : reports) {
    out << r.name() << ',' << r.trials() << ',' << r.violations() << ',' << number(r.max_slack()) << ','
        << (r.violations() == 0 ? 1 : 0) << '\n';
  }
  out << "model_error_coverage," << coverage.trials.size() << ',' << coverage.failures << ','
      << number(coverage.failure_fraction - coverage.threshold) << ',' << (coverage.passed() ? 1 : 0) << '\n';
  out << escape_spot_check.name() << ',' << escape_spot_check.trials() << ',' << escape_spot_check.violations() << ','
      << number(escape_spot_check.max_slack()) << ',' << (escape_spot_check.violations() == 0 ? 1 : 0) << '\n';
  return out.str();
}

CampaignResult run_campaign(const CampaignConfig& config) {
  const Rng base = Rng(config.seed).fork(streams::kInstances);
  auto trial_rng = [&](std::uint64_t check, std::int64_t k) { return base.fork(check).fork(static_cast<std::uint64_t>(k)); };
  auto known_predicate = [](const TabularDecPomdp& env, const std::vector<char>& set) {
    const JointActionId num_actions = env.num_joint_actions();
    return KnownPredicate([&set, num_actions](StateId s, JointActionId a) {
      return set[static_cast<std::size_t>(s * num_actions + a)] != 0;
    });
  };
  auto random_policy = [](const TabularDecPomdp& env, std::int64_t k, Rng& rng) -> std::unique_ptr<JointPolicy> {
    if (k % 2 == 1) return std::make_unique<UniformRandomPolicy>();
    return std::make_unique<TreePolicy>(random_tree_policy(make_layout(env.policy_space()), rng));
  };
  auto run = [&](const std::string& name, std::int64_t trials,
                 const std::function<BoundTrial(std::int64_t)>& trial) {
    std::vector<BoundTrial> out(static_cast<std::size_t>(trials));
    parallel_for(trials, config.workers, [&](std::int64_t k) { out[static_cast<std::size_t>(k)] = trial(k); });
    BoundReport report(name);
    for (const auto& t : out) report.add(t);
    return report;
  };

  CampaignResult result;
  result.reports.push_back(run("simulation_policy", config.simulation_policy_trials, [&](std::int64_t k) {
    Rng rng = trial_rng(1, k);
    const ExplicitDecPomdp d(random_theory_instance(rng));
    const ExplicitDecPomdp d_hat(perturb_tables(d.tables(), 0.3 * rng.uniform(), 0.1, rng));
    const auto policy = random_policy(d, k, rng);
    return check_simulation_policy(d, d_hat, *policy);
  }));
  result.reports.push_back(run("simulation_optimal", config.simulation_optimal_trials, [&](std::int64_t k) {
    Rng rng = trial_rng(2, k);
    const ExplicitDecPomdp d(random_theory_instance(rng, config.max_policies));
    const ExplicitDecPomdp d_hat(perturb_tables(d.tables(), 0.3 * rng.uniform(), 0.1, rng));
    return check_simulation_optimal(d, d_hat);
  }));
  result.reports.push_back(run("optimism", config.optimism_trials, [&](std::int64_t k) {
    Rng rng = trial_rng(3, k);
    const ExplicitDecPomdp d(random_theory_instance(rng, config.max_policies));
    const std::vector<char> set = random_known_set(d, rng);
    return check_optimism(d, known_predicate(d, set));
  }));
  result.reports.push_back(run("induced_inequality", config.induced_trials, [&](std::int64_t k) {
    Rng rng = trial_rng(4, k);
    const ExplicitDecPomdp d(random_theory_instance(rng));
    const std::vector<char> set = random_known_set(d, rng);
    const auto policy = random_policy(d, k, rng);
    return check_induced_inequality(d, known_predicate(d, set), *policy);
  }));
  result.escape_spot_check = run("escape_spot_check", config.escape_spot_checks, [&](std::int64_t k) {
    Rng rng = trial_rng(5, k);
    const ExplicitDecPomdp d(random_theory_instance(rng));
    const std::vector<char> set = random_known_set(d, rng);
    const auto policy = random_policy(d, k, rng);
    const KnownPredicate known = known_predicate(d, set);
    const double p = escape_probability(d, *policy, known);
    const double freq = escape_frequency(d, *policy, known, config.escape_episodes, rng);
    const double se = std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(config.escape_episodes));
    return BoundTrial{std::abs(freq - p), 3.0 * se};
  });

  RandomDecPomdpSpec spec;
  spec.num_states = 5;
  spec.horizon = 4;
  spec.reward_noise = 0.5;
  Rng env_rng = trial_rng(6, 0);
  const ExplicitDecPomdp coverage_env(random_decpomdp_tables(spec, env_rng));
  result.coverage = check_model_error_coverage(coverage_env, config.coverage_m, config.delta, config.coverage_trials,
                                               config.seed, config.workers);
  return result;
}

void write_campaign(const CampaignResult& result, const std::string& directory) {
  std::filesystem::create_directories(directory);
  const std::filesystem::path dir(directory);
  for (const auto& r : result.reports) write_file((dir / (r.name() + ".csv")).string(), r.csv());
  write_file((dir / "escape_spot_check.csv").string(), result.escape_spot_check.csv());
  write_file((dir / "model_error_coverage.csv").string(), result.coverage.csv());
  write_file((dir / "summary.csv").string(), result.summary_csv());
}

}  // namespace decmarl
