#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "decmarl/enumeration.hpp"
#include "decmarl/envs.hpp"
#include "decmarl/evaluation.hpp"
#include "decmarl/theory_check.hpp"

namespace decmarl {
namespace {

DecPomdpTables theory_tables(std::uint64_t seed, StateId states = 3) {
  Rng rng(seed);
  RandomDecPomdpSpec spec = canonical_tiny_spec();
  spec.num_states = states;
  spec.termination_rate = 0.4;
  return random_decpomdp_tables(spec, rng);
}

TEST(EpsilonBounds, ClosedFormExample) {
  const EpsilonBounds b = epsilon_bounds(1000, 0.1, 10, 4);
  EXPECT_NEAR(b.epsilon_r, std::sqrt(std::log(1600.0) / 2000.0), 1e-15);
  EXPECT_NEAR(b.epsilon_r, 0.06074, 5e-6);
  EXPECT_NEAR(b.epsilon_p, std::sqrt((2.0 / 1000.0) * std::log(1022.0 * 2.0 * 40.0 / 0.1)), 1e-12);
}

TEST(EpsilonBounds, LargeStateCountsStayFinite) {
  const EpsilonBounds b = epsilon_bounds(100, 0.05, 5000, 16);
  EXPECT_TRUE(std::isfinite(b.epsilon_p));
  const double log_term = 5000.0 * std::log(2.0) + std::log(2.0 * 5000.0 * 16.0 / 0.05);
  EXPECT_NEAR(b.epsilon_p, std::sqrt(0.02 * log_term), 1e-9);
  EXPECT_EQ(epsilon_bounds(10, 0.1, 1, 4).epsilon_p, 0.0);
}

TEST(EpsilonBounds, ShrinkWithSamplesGrowWithConfidence) {
  double previous = 1e9;
  for (std::int64_t m : {1, 2, 5, 10, 100, 1000, 100000}) {
    const EpsilonBounds b = epsilon_bounds(m, 0.1, 5, 4);
    EXPECT_LT(b.epsilon_r, previous);
    previous = b.epsilon_r;
  }
  const EpsilonBounds loose = epsilon_bounds(100, 0.1, 5, 4);
  const EpsilonBounds tight = epsilon_bounds(100, 0.01, 5, 4);
  EXPECT_GT(tight.epsilon_r, loose.epsilon_r);
  EXPECT_GT(tight.epsilon_p, loose.epsilon_p);
}

TEST(SimulationBound, FormulaAndDegenerateDiscount) {
  EXPECT_DOUBLE_EQ(simulation_bound(0.2, 0.7, 0.0), 0.2);
  EXPECT_DOUBLE_EQ(simulation_bound(0.1, 0.2, 0.5), 0.1 / 0.5 + 0.5 * 0.2 * 2.0 / (2.0 * 0.5));
  const EpsilonBounds b{0.05, 0.1};
  EXPECT_DOUBLE_EQ(theorem_epsilon(b, 0.9), 2.0 * 0.05 / 0.1 + 0.9 * 0.1 * 10.0 / 0.1);
}

TEST(BoundReport, ViolationsUseTheTolerance) {
  BoundReport r("x");
  EXPECT_EQ(r.max_slack(), -std::numeric_limits<double>::infinity());
  r.add({1.0 + 5e-10, 1.0});
  r.add({0.5, 1.0});
  EXPECT_EQ(r.violations(), 0);
  r.add({1.0 + 2e-9, 1.0});
  EXPECT_EQ(r.violations(), 1);
  EXPECT_EQ(r.trials(), 3);
  EXPECT_NEAR(r.max_slack(), 2e-9, 1e-15);
  EXPECT_EQ(r.csv().substr(0, r.csv().find('\n')), "trial,lhs,rhs,slack,violated");
}

TEST(Perturbation, ZeroRateKeepsTablesAndDeviationIsMeasured) {
  const DecPomdpTables t = theory_tables(1);
  Rng rng(2);
  const DecPomdpTables same = perturb_tables(t, 0.0, 0.0, rng);
  const TableDeviation zero = max_deviation(t, same);
  EXPECT_EQ(zero.epsilon_r, 0.0);
  EXPECT_LT(zero.epsilon_p, 1e-15);
  const DecPomdpTables moved = perturb_tables(t, 0.3, 0.1, rng);
  validate_tables(moved);
  const TableDeviation dev = max_deviation(t, moved);
  EXPECT_GT(dev.epsilon_p, 0.0);
  EXPECT_LE(dev.epsilon_p, 0.6 + 1e-12);
  EXPECT_LE(dev.epsilon_r, 0.1 + 1e-12);
  for (const auto& r : moved.rewards) {
    EXPECT_GE(r.mean, 0.0);
    EXPECT_LE(r.mean, 1.0);
  }
}

TEST(SimulationLemma, IdenticalModelsGiveZero) {
  const ExplicitDecPomdp d(theory_tables(3));
  const BoundTrial policy = check_simulation_policy(d, d, UniformRandomPolicy());
  EXPECT_EQ(policy.lhs, 0.0);
  EXPECT_EQ(policy.rhs, 0.0);
  EXPECT_FALSE(policy.violated());
  const BoundTrial optimal = check_simulation_optimal(d, d);
  EXPECT_EQ(optimal.lhs, 0.0);
  EXPECT_FALSE(optimal.violated());
}

TEST(SimulationLemma, HoldsOnPerturbedPairs) {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const DecPomdpTables t = random_theory_instance(rng, 4096);
    const ExplicitDecPomdp d(t);
    const ExplicitDecPomdp d_hat(perturb_tables(t, 0.3 * rng.uniform(), 0.1, rng));
    const TreePolicy pi = random_tree_policy(make_layout(d.policy_space()), rng);
    const BoundTrial part1 = check_simulation_policy(d, d_hat, pi);
    EXPECT_FALSE(part1.violated()) << part1.lhs << " > " << part1.rhs;
    EXPECT_GE(part1.lhs, std::abs(evaluate_policy_exact(d, pi) - evaluate_policy_exact(d_hat, pi)) - 1e-12);
    if (trial % 4 == 0) EXPECT_FALSE(check_simulation_optimal(d, d_hat).violated());
  }
}

TEST(SimulationLemma, ShapeMismatchIsRejected) {
  const ExplicitDecPomdp a(theory_tables(5, 3));
  const ExplicitDecPomdp b(theory_tables(5, 4));
  EXPECT_THROW(check_simulation_policy(a, b, UniformRandomPolicy()), std::invalid_argument);
}

TEST(Optimism, AllKnownIsEquality) {
  const ExplicitDecPomdp d(theory_tables(6));
  const BoundTrial t = check_optimism(d, [](StateId, JointActionId) { return true; });
  EXPECT_NEAR(t.slack(), 0.0, 1e-12);
}

TEST(Optimism, NothingKnownPaysTheMaximum) {
  const ExplicitDecPomdp d(theory_tables(7));
  const BoundTrial t = check_optimism(d, [](StateId, JointActionId) { return false; });
  double full = 0.0;
  for (int k = 0; k < d.horizon(); ++k) full += std::pow(d.gamma(), k);
  EXPECT_NEAR(t.rhs, full, 1e-12);
  EXPECT_LE(t.lhs, full);
  EXPECT_FALSE(t.violated());
}

TEST(InducedInequality, AllKnownGivesZeroBothSides) {
  const ExplicitDecPomdp d(theory_tables(8));
  const auto all = [](StateId, JointActionId) { return true; };
  const BoundTrial t = check_induced_inequality(d, all, UniformRandomPolicy());
  EXPECT_NEAR(t.lhs, 0.0, 1e-12);
  EXPECT_EQ(t.rhs, 0.0);
}

TEST(InducedInequality, PolicyThatNeverLeavesKnownPairs) {
  const ExplicitDecPomdp d(theory_tables(9));
  const auto first_only = [](StateId, JointActionId a) { return a == 0; };
  const BoundTrial t = check_induced_inequality(d, first_only, FirstActionPolicy());
  EXPECT_NEAR(t.lhs, 0.0, 1e-12);
  EXPECT_EQ(t.rhs, 0.0);
  EXPECT_EQ(escape_probability(d, FirstActionPolicy(), first_only), 0.0);
}

TEST(InducedInequality, ExactEscapeMatchesSimulation) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const ExplicitDecPomdp d(random_theory_instance(rng, 4096));
    const std::vector<char> known = random_known_set(d, rng);
    const JointActionId na = d.num_joint_actions();
    const auto pred = [&](StateId s, JointActionId a) { return known[static_cast<std::size_t>(s * na + a)] != 0; };
    const double p = escape_probability(d, UniformRandomPolicy(), pred);
    const double freq = escape_frequency(d, UniformRandomPolicy(), pred, 20000, rng);
    EXPECT_LE(std::abs(freq - p), 3.0 * std::sqrt(p * (1.0 - p) / 20000.0) + 1e-12);
    EXPECT_FALSE(check_induced_inequality(d, pred, UniformRandomPolicy()).violated());
  }
}

TEST(Coverage, DeterministicEnvNeverFails) {
  DecPomdpTables t = theory_tables(11);
  for (auto& row : t.transitions) row = {{row.front().state, 1.0}};
  const ExplicitDecPomdp d(t);
  const CoverageResult r = check_model_error_coverage(d, 1, 0.1, 100, 3);
  EXPECT_EQ(r.failures, 0);
  EXPECT_TRUE(r.passed());
  for (const auto& trial : r.trials) {
    EXPECT_EQ(trial.max_l1_error, 0.0);
    EXPECT_EQ(trial.max_reward_error, 0.0);
  }
}

TEST(Coverage, ThresholdAndTrendOnRandomEnv) {
  Rng rng(12);
  RandomDecPomdpSpec spec;
  spec.num_states = 4;
  spec.reward_noise = 0.5;
  const EnvPtr env = make_random_decpomdp(spec, rng);
  const CoverageResult small = check_model_error_coverage(*env, 100, 0.1, 100, 4, 2);
  const CoverageResult large = check_model_error_coverage(*env, 400, 0.1, 100, 4, 2);
  EXPECT_TRUE(small.passed());
  EXPECT_TRUE(large.passed());
  EXPECT_GT(small.threshold, 0.1);
  EXPECT_LT(small.threshold, 0.2);
  double small_l1 = 0.0;
  double large_l1 = 0.0;
  for (const auto& t : small.trials) small_l1 += t.max_l1_error;
  for (const auto& t : large.trials) large_l1 += t.max_l1_error;
  EXPECT_NEAR(large_l1 / small_l1, 0.5, 0.15);
  const CoverageResult again = check_model_error_coverage(*env, 100, 0.1, 100, 4, 1);
  EXPECT_EQ(again.csv(), small.csv());
}

TEST(RandomTheoryInstance, RespectsTheInstanceFamily) {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const DecPomdpTables t = random_theory_instance(rng, 4096);
    validate_tables(t);
    EXPECT_EQ(t.shape.num_agents, 2);
    EXPECT_LE(t.shape.num_states, 5);
    EXPECT_LE(t.shape.horizon, 4);
    EXPECT_EQ(t.shape.gamma, 0.9);
    for (int a : t.shape.actions_per_agent) EXPECT_LE(a, 2);
    for (ObsId z : t.shape.obs_per_agent) EXPECT_LE(z, 2);
    const ExplicitDecPomdp env(t);
    EXPECT_TRUE(count_joint_policies(env).at_most(4096));
  }
}

TEST(Campaign, SmallCampaignHasNoViolations) {
  CampaignConfig c = CampaignConfig::with_trials(20);
  c.seed = 5;
  EXPECT_EQ(c.simulation_policy_trials, 20);
  EXPECT_EQ(c.simulation_optimal_trials, 4);
  EXPECT_EQ(c.coverage_trials, 100);
  c.coverage_m = 200;
  const CampaignResult r = run_campaign(c);
  ASSERT_EQ(r.reports.size(), 4U);
  for (const auto& rep : r.reports) EXPECT_EQ(rep.violations(), 0) << rep.name();
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.summary_csv(), run_campaign(c).summary_csv());
}

}  // namespace
}  // namespace decmarl
