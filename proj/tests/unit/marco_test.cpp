#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "decmarl/envs.hpp"
#include "decmarl/marco.hpp"

namespace decmarl {
namespace {

DecPomdpShape bandit_shape() {
  DecPomdpShape shape;
  shape.num_agents = 1;
  shape.num_states = 1;
  shape.actions_per_agent = {2};
  shape.obs_per_agent = {1};
  shape.horizon = 1;
  return shape;
}

DecPomdpTables bandit_tables(double r0, double r1) {
  DecPomdpTables t = DecPomdpTables::allocate("bandit", bandit_shape());
  t.initial = {1.0};
  for (JointActionId a = 0; a < 2; ++a) {
    t.transitions[static_cast<std::size_t>(a)] = {{0, 1.0}};
    t.terminations[static_cast<std::size_t>(a)] = 1.0;
  }
  t.rewards[0] = {r0, 0.0};
  t.rewards[1] = {r1, 0.0};
  return t;
}

// Arm 0 pays 0.6 in every member; arm 1 pays 1 in one member and 0 in the other.
EnsembleWorldModel disagreeing_bandit_model() {
  EmpiricalModel a;
  EmpiricalModel b;
  a.add(0, 0, 0.6, 0, true);
  b.add(0, 0, 0.6, 0, true);
  a.add(0, 1, 1.0, 0, true);
  b.add(0, 1, 0.0, 0, true);
  ObservationModel obs;
  obs.record(0, kNoJointAction, {0});
  obs.record(0, 0, {0});
  obs.record(0, 1, {0});
  return EnsembleWorldModel(bandit_shape(), {a, b}, obs, AvailabilityModel{});
}

MarcoConfig small_config() {
  MarcoConfig c;
  c.init_random_samples = 200;
  c.samples_per_round = 200;
  c.model_train_steps_per_round = 500;
  c.explore_train_steps_per_round = 500;
  c.env_sample_cap = 600;
  c.eval_episodes = 10;
  return c;
}

TEST(MarcoDefaults, PerEnvironmentRoundSizes) {
  const MarcoConfig s = marco_defaults("switch");
  EXPECT_EQ(s.ensemble_size, 5);
  EXPECT_EQ(s.lambda, 2.0);
  EXPECT_EQ(s.samples_per_round, 5000);
  EXPECT_EQ(s.env_sample_cap, 10'000);
  for (const char* id : {"switch_bridge", "grid_ref"}) {
    const MarcoConfig c = marco_defaults(id);
    EXPECT_EQ(c.samples_per_round, 10'000);
    EXPECT_EQ(c.model_train_steps_per_round, 50'000);
    EXPECT_EQ(c.explore_train_steps_per_round, 50'000);
    EXPECT_EQ(c.env_sample_cap, 50'000);
  }
}

TEST(MarcoConfig, ValidationRejectsInconsistentCounts) {
  MarcoConfig c = small_config();
  c.env_sample_cap = 100;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = small_config();
  c.lambda = -1.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = small_config();
  c.samples_per_round = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  EXPECT_NO_THROW(validate(small_config()));
}

TEST(MarcoTrain, CapAtInitialSamplesFitsOnceAndStops) {
  const EnvPtr env = make_switch();
  MarcoConfig c = small_config();
  c.env_sample_cap = c.init_random_samples;
  const MarcoResult r = marco_train(*env, c, 1);
  ASSERT_EQ(r.metrics.size(), 1U);
  EXPECT_EQ(r.metrics[0].round, 0);
  EXPECT_EQ(r.env_steps, c.init_random_samples);
  EXPECT_EQ(static_cast<std::int64_t>(r.dataset.size()), c.init_random_samples);
  EXPECT_EQ(r.model_steps, c.model_train_steps_per_round);
}

TEST(MarcoTrain, SampleAccountingMatchesDataset) {
  const EnvPtr env = make_switch();
  MarcoConfig c = small_config();
  c.samples_per_round = 150;
  const MarcoResult r = marco_train(*env, c, 2);
  EXPECT_EQ(r.env_steps, c.env_sample_cap);
  EXPECT_EQ(static_cast<std::int64_t>(r.dataset.size()), c.env_sample_cap);
  std::int64_t previous = 0;
  for (const auto& row : r.metrics) {
    EXPECT_GT(row.env_samples, previous);
    EXPECT_EQ(row.dataset_size, row.env_samples);
    previous = row.env_samples;
  }
  EXPECT_EQ(r.metrics.back().env_samples, c.env_sample_cap);
  EXPECT_EQ(r.coverage.size(), r.dataset.distinct_pairs());
}

TEST(MarcoTrain, SameSeedGivesIdenticalMetrics) {
  const EnvPtr env = make_switch_bridge();
  const MarcoConfig c = small_config();
  const MarcoResult a = marco_train(*env, c, 7);
  const MarcoResult b = marco_train(*env, c, 7);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(metrics_line(a.metrics[i]), metrics_line(b.metrics[i]));
  EXPECT_EQ(a.dataset.serialize(), b.dataset.serialize());
}

TEST(MarcoTrain, ExplorationGoesFurtherAcrossTheBridgeThanRandomCollection) {
  const EnvPtr env = make_switch_bridge();
  const SwitchCodec codec(SwitchOptions{3, 9, true, 3});
  MarcoConfig c = marco_defaults("switch_bridge");
  c.eval_interval = 100;
  c.eval_episodes = 5;
  const MarcoResult r = marco_train(*env, c, 3);
  auto mean_progress = [&](const Dataset& d) {
    double total = 0.0;
    for (const auto& t : d.records()) {
      for (int p : codec.decode(t.state).positions) total += p;
    }
    return total / static_cast<double>(d.size());
  };
  Dataset random;
  Rng rng(3);
  collect_env_samples(*env, UniformBehavior(), c.env_sample_cap, rng, random);
  EXPECT_GT(mean_progress(r.dataset), 1.5 * mean_progress(random));
}

TEST(ExplorationPolicy, ZeroLambdaIgnoresTheBonus) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  const ExplicitDecPomdp start(bandit_tables(0.0, 0.0));
  const EpsilonSchedule eps = EpsilonSchedule::fixed(1.0);
  TabularLearner explorer(LearnerKind::kVdn, ContextKind::kCentralState, {2}, 0.01, 0.99);
  Rng rng(1);
  train_exploration_policy(model, start, 0.0, explorer, {4000, &eps, nullptr, 0}, rng);
  EXPECT_NEAR(explorer.tables()[0].value(state_context(0), 0), 0.6, 1e-6);
  EXPECT_NEAR(explorer.tables()[0].value(state_context(0), 1), 0.5, 0.1);
  EXPECT_EQ(explorer.tables()[0].greedy_action(state_context(0), full_mask(2)), 0);
}

TEST(ExplorationPolicy, LargeLambdaPrefersTheUncertainArm) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  EXPECT_EQ(model.uncertainty_bonus(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(model.uncertainty_bonus(0, 1), 0.25);
  const ExplicitDecPomdp start(bandit_tables(0.0, 0.0));
  const EpsilonSchedule eps = EpsilonSchedule::fixed(1.0);
  TabularLearner explorer(LearnerKind::kVdn, ContextKind::kCentralState, {2}, 0.05, 0.99);
  Rng rng(2);
  train_exploration_policy(model, start, 10.0, explorer, {4000, &eps, nullptr, 0}, rng);
  EXPECT_EQ(explorer.tables()[0].greedy_action(state_context(0), full_mask(2)), 1);
  EXPECT_NEAR(explorer.tables()[0].value(state_context(0), 1), 3.0, 0.1);
}

TEST(ExplorationPolicy, RejectsHistoryKeyedTables) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  const ExplicitDecPomdp start(bandit_tables(0.0, 0.0));
  TabularLearner explorer(LearnerKind::kVdn, ContextKind::kAoh, {2}, 0.1, 0.99);
  Rng rng(3);
  EXPECT_THROW(train_exploration_policy(model, start, 1.0, explorer, {10, nullptr, nullptr, 0}, rng),
               std::invalid_argument);
}

TEST(AgentTraining, InModelAgentsLearnTheModelReward) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  const ExplicitDecPomdp start(bandit_tables(0.0, 0.0));
  const EpsilonSchedule eps = EpsilonSchedule::fixed(1.0);
  TabularLearner agents(LearnerKind::kIql, ContextKind::kAoh, {2}, 0.05, 0.99);
  std::int64_t clock = 0;
  Rng rng(4);
  train_agents_in_model(model, start, agents, {3000, &eps, &clock, 0}, rng);
  EXPECT_EQ(clock, 3000);
  EXPECT_NEAR(agents.tables()[0].value({0}, 0), 0.6, 1e-9);
  EXPECT_EQ(extract_greedy_policy(agents.tables())->action(0, [] {
    AgentHistory h;
    h.push_observation(0);
    return h;
  }(), full_mask(2)), 0);
}

TEST(Collection, TakesExactlyTheRequestedSamples) {
  const EnvPtr env = make_switch();
  const StepCountingEnv counted(*env);
  Dataset d;
  Rng rng(5);
  EXPECT_EQ(collect_env_samples(counted, UniformBehavior(), 1, rng, d), 1);
  EXPECT_EQ(d.size(), 1U);
  EXPECT_EQ(counted.steps(), 1);
  EXPECT_EQ(collect_env_samples(counted, UniformBehavior(), 997, rng, d), 997);
  EXPECT_EQ(d.size(), 998U);
  EXPECT_EQ(counted.steps(), 998);
  EXPECT_EQ(d[0].timestep, 0);
  EXPECT_EQ(d[0].previous_joint_action, kNoJointAction);
}

TEST(Collection, FullyRandomTableBehaviorIsUniform) {
  QTable q(ContextKind::kCentralState, 4);
  q.at(state_context(0), 2) = 5.0;
  const std::vector<QTable> tables{q};
  const TableBehavior behavior(tables, 1.0);
  Rng rng(6);
  std::vector<double> hits(4, 0.0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits[static_cast<std::size_t>(behavior.act(0, 0, AgentHistory{}, full_mask(4), rng))] += 1;
  double chi2 = 0.0;
  for (double h : hits) chi2 += (h - n / 4.0) * (h - n / 4.0) / (n / 4.0);
  EXPECT_GT(1.0 - boost::math::cdf(boost::math::chi_squared(3), chi2), 0.001);
  const TableBehavior greedy(tables, 0.0);
  EXPECT_EQ(greedy.act(0, 0, AgentHistory{}, full_mask(4), rng), 2);
}

TEST(CoverageReport, EmptyDatasetGivesNoRows) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  EXPECT_TRUE(coverage_report(Dataset{}, model).empty());
}

TEST(CoverageReport, OneRowPerDistinctPairSorted) {
  const EnvPtr env = make_switch();
  Dataset d;
  Rng rng(7);
  collect_env_samples(*env, UniformBehavior(), 500, rng, d);
  const EnsembleWorldModel model = fit_ensemble(d, env->shape(), FitOptions{}, rng);
  const std::vector<CoverageRecord> rows = coverage_report(d, model);
  ASSERT_EQ(rows.size(), d.distinct_pairs());
  std::int64_t visits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      EXPECT_TRUE(rows[i - 1].state < rows[i].state ||
                  (rows[i - 1].state == rows[i].state && rows[i - 1].joint_action < rows[i].joint_action));
    }
    EXPECT_EQ(rows[i].visits, static_cast<std::int64_t>(d.visits(rows[i].state, rows[i].joint_action)));
    EXPECT_DOUBLE_EQ(rows[i].log_uncertainty,
                     std::log(model.uncertainty_bonus(rows[i].state, rows[i].joint_action) + 1e-12));
    visits += rows[i].visits;
  }
  EXPECT_EQ(visits, 500);
}

TEST(CoverageReport, ZeroBonusIsFloored) {
  const EnsembleWorldModel model = disagreeing_bandit_model();
  Dataset d;
  Transition t;
  t.observation = {0};
  t.available = {0b11};
  t.next_observation = {0};
  t.terminated = true;
  t.reward = 0.6;
  d.append(t);
  const std::vector<CoverageRecord> rows = coverage_report(d, model);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_DOUBLE_EQ(rows[0].log_uncertainty, std::log(1e-12));
  EXPECT_EQ(coverage_header(), "state_id,joint_action_flat,visits,log_uncertainty");
}

TEST(TestReturn, UndiscountedEpisodeSums) {
  const ExplicitDecPomdp env(bandit_tables(0.25, 0.75));
  Rng rng(8);
  const MonteCarloEstimate est = evaluate_test_return(env, FirstActionPolicy(), 20, rng);
  EXPECT_DOUBLE_EQ(est.mean, 0.25);
  EXPECT_EQ(est.standard_error, 0.0);
  EXPECT_THROW(evaluate_test_return(env, FirstActionPolicy(), 0, rng), std::invalid_argument);
}

TEST(Baseline, ZeroSamplesEvaluatesOnce) {
  const EnvPtr env = make_switch();
  BaselineConfig c;
  c.total_samples = 0;
  const BaselineResult r = run_baseline(*env, c, 1);
  ASSERT_EQ(r.metrics.size(), 1U);
  EXPECT_EQ(r.metrics[0].env_samples, 0);
}

TEST(Baseline, EvaluatesOnSchedule) {
  const EnvPtr env = make_switch();
  BaselineConfig c;
  c.total_samples = 2000;
  c.eval_every = 500;
  c.eval_episodes = 5;
  const BaselineResult r = run_baseline(*env, c, 2);
  ASSERT_EQ(r.metrics.size(), 5U);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) EXPECT_EQ(r.metrics[i].env_samples, 500 * static_cast<std::int64_t>(i));
}

TEST(Baseline, IqlSolvesSingleAgentBandit) {
  const ExplicitDecPomdp env(bandit_tables(0.2, 0.9));
  BaselineConfig c;
  c.learner.kind = LearnerKind::kIql;
  c.learner.epsilon = {1.0, 0.05, 500, false};
  c.total_samples = 5000;
  c.eval_every = 50;
  c.eval_episodes = 5;
  const BaselineResult r = run_baseline(env, c, 3);
  int optimal = 0;
  int late = 0;
  for (const auto& row : r.metrics) {
    if (row.env_samples < 1000) continue;
    ++late;
    optimal += row.test_return_mean == 0.9 ? 1 : 0;
  }
  ASSERT_GT(late, 0);
  EXPECT_GE(optimal, static_cast<int>(std::ceil(0.95 * late)));
}

}  // namespace
}  // namespace decmarl
