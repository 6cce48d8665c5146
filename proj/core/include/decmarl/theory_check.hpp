#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "decmarl/decpomdp.hpp"
#include "decmarl/envs.hpp"
#include "decmarl/policy.hpp"
#include "decmarl/rmax.hpp"

namespace decmarl {

inline constexpr double kBoundTolerance = 1e-9;

struct EpsilonBounds {
  double epsilon_r = 0.0;
  double epsilon_p = 0.0;
};

// Union-bound accuracies after m samples per pair:
// eps_R = sqrt(ln(4 S A / delta) / (2 m)),
// eps_P = sqrt((2 / m) ln((2^S - 2) 2 S A / delta)), with 2^S - 2 taken in
// log space. For S = 1 the transition estimate is exact and eps_P = 0.
EpsilonBounds epsilon_bounds(std::int64_t m, double delta, std::int64_t num_states, std::int64_t num_joint_actions);

// Right side of both simulation-lemma parts:
// eps_R / (1 - gamma) + gamma eps_P V_max / (2 (1 - gamma)).
double simulation_bound(double epsilon_r, double epsilon_p, double gamma);
// 2 eps_R / (1 - gamma) + gamma eps_P V_max / (1 - gamma).
double theorem_epsilon(const EpsilonBounds& bounds, double gamma);
inline double v_max(double gamma) { return 1.0 / (1.0 - gamma); }

struct BoundTrial {
  double lhs = 0.0;
  double rhs = 0.0;

  bool violated() const { return lhs > rhs + kBoundTolerance; }
  double slack() const { return lhs - rhs; }
};

class BoundReport {
 public:
  explicit BoundReport(std::string name) : name_(std::move(name)) {}

  void add(const BoundTrial& trial);
  const std::string& name() const { return name_; }
  std::int64_t trials() const { return static_cast<std::int64_t>(trials_.size()); }
  std::int64_t violations() const;
  // max(lhs - rhs); -inf when empty.
  double max_slack() const;
  const std::vector<BoundTrial>& entries() const { return trials_; }
  std::string csv() const;

 private:
  std::string name_;
  std::vector<BoundTrial> trials_;
};

struct TableDeviation {
  double epsilon_r = 0.0;  // max |R - R_hat|
  double epsilon_p = 0.0;  // max L1 distance between transition rows
};

TableDeviation max_deviation(const DecPomdpTables& a, const DecPomdpTables& b);

// Mixes every transition row with a Dirichlet(1) row at rate eta and shifts
// mean rewards uniformly within +-jitter, clamped to [0, 1].
DecPomdpTables perturb_tables(const DecPomdpTables& tables, double eta, double jitter, Rng& rng);

// Max over every node (state, joint history, t) reachable in either model of
// |V_D - V_D_hat| under one policy, against the bound at the true deviations.
BoundTrial check_simulation_policy(const ExplicitDecPomdp& d, const ExplicitDecPomdp& d_hat, const JointPolicy& policy);
// Same for optimal values: V*(s0) = max over deterministic joint policies,
// per initial state s0.
BoundTrial check_simulation_optimal(const ExplicitDecPomdp& d, const ExplicitDecPomdp& d_hat,
                                    std::uint64_t budget = kDefaultEnumerationBudget);
// Worst policy of J_D(pi) against J_{D_K}(pi) over every enumerated policy.
BoundTrial check_optimism(const TabularDecPomdp& d, const KnownPredicate& known,
                          std::uint64_t budget = kDefaultEnumerationBudget);
// |J_D - J_{D_K}| against V_max * P_D[escape from K].
BoundTrial check_induced_inequality(const TabularDecPomdp& d, const KnownPredicate& known, const JointPolicy& policy);

// Probability that an episode under D takes some pair outside K.
double escape_probability(const TabularDecPomdp& d, const JointPolicy& policy, const KnownPredicate& known);
double escape_frequency(const TabularDecPomdp& d, const JointPolicy& policy, const KnownPredicate& known,
                        std::int64_t episodes, Rng& rng);

struct CoverageTrial {
  double max_reward_error = 0.0;
  double max_l1_error = 0.0;
  bool failed = false;
};

struct CoverageResult {
  std::int64_t m = 0;
  double delta = 0.0;
  EpsilonBounds bounds;
  std::vector<CoverageTrial> trials;
  std::int64_t failures = 0;
  double failure_fraction = 0.0;
  // delta plus the 99% one-sided binomial margin, as a fraction of trials.
  double threshold = 0.0;

  bool passed() const { return failure_fraction <= threshold; }
  std::string csv() const;
};

// Per trial, m i.i.d. draws from every pair; a trial fails when any pair's
// reward or transition estimate misses its bound.
CoverageResult check_model_error_coverage(const TabularDecPomdp& env, std::int64_t m, double delta,
                                          std::int64_t trials, std::uint64_t seed, int workers = 1);

// Random theory instance: N=2, |S| <= 5, |A_j| <= 2, |Z_j| <= 2, H <= 4,
// gamma 0.9. With max_policies > 0 the horizon is redrawn until the joint
// policy count fits.
DecPomdpTables random_theory_instance(Rng& rng, std::uint64_t max_policies = 0);
// Each pair is known with a probability drawn uniformly for the instance.
std::vector<char> random_known_set(const TabularDecPomdp& env, Rng& rng);

struct CampaignConfig {
  std::int64_t simulation_policy_trials = 1000;
  std::int64_t simulation_optimal_trials = 200;
  std::int64_t optimism_trials = 500;
  std::int64_t induced_trials = 1000;
  std::int64_t coverage_trials = 500;
  std::int64_t coverage_m = 1000;
  double delta = 0.1;
  std::int64_t escape_spot_checks = 50;
  std::int64_t escape_episodes = 20'000;
  std::uint64_t max_policies = 4096;
  std::uint64_t seed = 0;
  int workers = 0;

  // Scales every trial count relative to 1000 simulation-policy trials.
  static CampaignConfig with_trials(std::int64_t trials);
};

struct CampaignResult {
  std::vector<BoundReport> reports;  // the four lemma checks
  BoundReport escape_spot_check{"escape_spot_check"};
  CoverageResult coverage;

  std::int64_t violations() const;
  // True when no lemma is violated and coverage holds; the statistical
  // spot check is reported separately.
  bool passed() const;
  std::string summary_csv() const;
};

CampaignResult run_campaign(const CampaignConfig& config);
// Writes one CSV per check plus summary.csv into `directory`.
void write_campaign(const CampaignResult& result, const std::string& directory);

}  // namespace decmarl
