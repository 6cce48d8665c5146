#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "decmarl/agents.hpp"
#include "decmarl/enumeration.hpp"
#include "decmarl/evaluation.hpp"
#include "decmarl/policy.hpp"

namespace decmarl {
namespace {

LearnerStep single_step(int agents, double reward, bool terminal) {
  LearnerStep step;
  for (int j = 0; j < agents; ++j) {
    step.keys.push_back(state_context(0));
    step.actions.push_back(0);
    step.next_keys.push_back(state_context(1));
    step.next_available.push_back(full_mask(2));
  }
  step.reward = reward;
  step.terminal = terminal;
  return step;
}

// One state, one agent, horizon 1, three arms with different means.
DecPomdpTables three_arm_bandit() {
  DecPomdpShape shape;
  shape.num_agents = 1;
  shape.num_states = 1;
  shape.actions_per_agent = {3};
  shape.obs_per_agent = {1};
  shape.horizon = 1;
  DecPomdpTables t = DecPomdpTables::allocate("bandit", shape);
  t.initial = {1.0};
  const double means[3] = {0.2, 0.9, 0.5};
  for (JointActionId a = 0; a < 3; ++a) {
    t.transitions[t.pair_index(0, a)] = {{0, 1.0}};
    t.rewards[t.pair_index(0, a)] = {means[a], 0.1};
    t.terminations[t.pair_index(0, a)] = 1.0;
  }
  return t;
}

TEST(EpsilonGreedy, FullyRandomIsUniformOverAvailable) {
  QTable q(ContextKind::kCentralState, 5);
  q.at(state_context(0), 3) = 10.0;
  const ActionMask available = 0b11011;
  Rng rng(1);
  std::vector<double> hits(5, 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) hits[static_cast<std::size_t>(epsilon_greedy_action(q, state_context(0), available, 1.0, rng))] += 1;
  EXPECT_EQ(hits[2], 0.0);
  double chi2 = 0.0;
  for (int a : mask_actions(available)) {
    const double expected = n / 4.0;
    chi2 += (hits[static_cast<std::size_t>(a)] - expected) * (hits[static_cast<std::size_t>(a)] - expected) / expected;
  }
  const boost::math::chi_squared dist(3);
  EXPECT_GT(1.0 - boost::math::cdf(dist, chi2), 0.001);
}

TEST(EpsilonGreedy, GreedyPicksArgmaxAndLowestOnTies) {
  QTable q(ContextKind::kCentralState, 4);
  Rng rng(2);
  EXPECT_EQ(epsilon_greedy_action(q, state_context(0), 0b1110, 0.0, rng), 1);
  q.at(state_context(0), 2) = 0.5;
  q.at(state_context(0), 3) = 0.5;
  EXPECT_EQ(epsilon_greedy_action(q, state_context(0), full_mask(4), 0.0, rng), 2);
  q.at(state_context(0), 0) = 0.9;
  EXPECT_EQ(epsilon_greedy_action(q, state_context(0), 0b1100, 0.0, rng), 2);
  EXPECT_EQ(q.greedy_action(state_context(0), full_mask(4)), 0);
}

TEST(EpsilonSchedule, AnnealsLinearlyThenHolds) {
  const EpsilonSchedule s{1.0, 0.1, 100, false};
  EXPECT_DOUBLE_EQ(s(0), 1.0);
  EXPECT_DOUBLE_EQ(s(50), 0.55);
  EXPECT_DOUBLE_EQ(s(100), 0.1);
  EXPECT_DOUBLE_EQ(s(1000), 0.1);
  EXPECT_DOUBLE_EQ(EpsilonSchedule::fixed(0.3)(12345), 0.3);
}

TEST(QTable, AbsentEntriesReadAsDefaultWithoutInserting) {
  QTable q(ContextKind::kAoh, 3, 0.25);
  EXPECT_EQ(q.value({0, 1, 2}, 1), 0.25);
  EXPECT_EQ(q.size(), 0U);
  q.at({0, 1, 2}, 1) = 2.0;
  EXPECT_EQ(q.size(), 1U);
  EXPECT_EQ(q.max_value({0, 1, 2}, 0b101), 0.25);
  EXPECT_EQ(q.max_value({0, 1, 2}, 0b111), 2.0);
}

TEST(QTable, SerializeRoundTrip) {
  QTable q(ContextKind::kAoh, 3);
  q.at({0}, 2) = 0.125;
  q.at({1, 2, 0}, 0) = -3.5;
  q.at({1, 0, 1}, 1) = 1.0 / 3.0;
  const QTable back = QTable::parse(q.serialize());
  EXPECT_TRUE(back == q);
  EXPECT_EQ(back.serialize(), q.serialize());
}

TEST(Iql, NoDiscountFullStepCopiesReward) {
  std::vector<QTable> tables{QTable(ContextKind::kCentralState, 2)};
  tables[0].at(state_context(1), 1) = 7.0;
  iql_update(tables, single_step(1, 1.0, false), 1.0, 0.0);
  EXPECT_DOUBLE_EQ(tables[0].value(state_context(0), 0), 1.0);
}

TEST(Iql, TerminalZeroRewardLeavesZeroTable) {
  std::vector<QTable> tables{QTable(ContextKind::kCentralState, 2), QTable(ContextKind::kCentralState, 2)};
  iql_update(tables, single_step(2, 0.0, true), 0.5, 0.99);
  for (const auto& q : tables) EXPECT_EQ(q.value(state_context(0), 0), 0.0);
}

TEST(Iql, BootstrapsFromOwnNextMax) {
  std::vector<QTable> tables{QTable(ContextKind::kCentralState, 2)};
  tables[0].at(state_context(1), 0) = 2.0;
  tables[0].at(state_context(1), 1) = 4.0;
  iql_update(tables, single_step(1, 1.0, false), 0.5, 0.5);
  EXPECT_DOUBLE_EQ(tables[0].value(state_context(0), 0), 0.5 * (1.0 + 0.5 * 4.0));
}

TEST(Iql, BanditConvergesToArmMeans) {
  const ExplicitDecPomdp env(three_arm_bandit());
  std::vector<QTable> tables{QTable(ContextKind::kCentralState, 3)};
  Rng rng(3);
  std::vector<int> visits(3, 0);
  for (int i = 0; i < 30000; ++i) {
    const int a = static_cast<int>(rng.uniform_index(3));
    LearnerStep step;
    step.keys = {state_context(0)};
    step.actions = {a};
    step.next_keys = {state_context(0)};
    step.next_available = {full_mask(3)};
    step.reward = sample_reward(env.reward(0, a), rng);
    step.terminal = true;
    iql_update(tables, step, 1.0 / ++visits[static_cast<std::size_t>(a)], 0.99);
  }
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(tables[0].value(state_context(0), a), env.reward(0, a).mean, 3e-3);
  }
}

TEST(Vdn, FixedPointSplitsTheReward) {
  for (double alpha : {0.5, 0.1}) {
    std::vector<QTable> tables(2, QTable(ContextKind::kCentralState, 2));
    const std::vector<QTable> targets = tables;
    for (int i = 0; i < 500; ++i) vdn_update(tables, targets, single_step(2, 1.0, true), alpha, 0.99);
    EXPECT_NEAR(tables[0].value(state_context(0), 0) + tables[1].value(state_context(0), 0), 1.0, 1e-9);
    EXPECT_NEAR(tables[0].value(state_context(0), 0), 0.5, 1e-9);
  }
}

TEST(Vdn, TerminalTargetIsReward) {
  std::vector<QTable> tables(2, QTable(ContextKind::kCentralState, 2));
  std::vector<QTable> targets = tables;
  targets[0].at(state_context(1), 0) = 100.0;
  vdn_update(tables, targets, single_step(2, 0.6, true), 1.0, 0.9);
  EXPECT_DOUBLE_EQ(tables[0].value(state_context(0), 0), 0.6);
  EXPECT_DOUBLE_EQ(tables[1].value(state_context(0), 0), 0.6);
}

TEST(Vdn, BootstrapSumsTargetMaxes) {
  std::vector<QTable> tables(2, QTable(ContextKind::kCentralState, 2));
  std::vector<QTable> targets = tables;
  targets[0].at(state_context(1), 1) = 1.0;
  targets[1].at(state_context(1), 0) = 2.0;
  vdn_update(tables, targets, single_step(2, 0.0, false), 1.0, 0.5);
  EXPECT_DOUBLE_EQ(tables[0].value(state_context(0), 0), 1.5);
}

TEST(Vdn, SingleAgentMatchesIql) {
  Rng rng(4);
  std::vector<QTable> iql{QTable(ContextKind::kCentralState, 2)};
  std::vector<QTable> vdn = iql;
  for (int i = 0; i < 200; ++i) {
    LearnerStep step = single_step(1, rng.uniform(), rng.bernoulli(0.3));
    step.keys[0] = state_context(static_cast<StateId>(rng.uniform_index(3)));
    step.actions[0] = static_cast<int>(rng.uniform_index(2));
    step.next_keys[0] = state_context(static_cast<StateId>(rng.uniform_index(3)));
    iql_update(iql, step, 0.3, 0.9);
    vdn_update(vdn, vdn, step, 0.3, 0.9);
  }
  EXPECT_TRUE(iql[0] == vdn[0]);
}

TEST(TabularLearner, TargetsRefreshOnSchedule) {
  TabularLearner learner(LearnerKind::kVdn, ContextKind::kCentralState, {2}, 1.0, 1.0, 2);
  LearnerStep chain = single_step(1, 0.0, false);
  chain.keys[0] = state_context(0);
  chain.next_keys[0] = state_context(1);
  LearnerStep leaf = single_step(1, 1.0, true);
  leaf.keys[0] = state_context(1);
  learner.update(leaf);
  learner.update(chain);
  // The target still held zeros when the chain step ran.
  EXPECT_EQ(learner.tables()[0].value(state_context(0), 0), 0.0);
  learner.update(chain);
  EXPECT_EQ(learner.tables()[0].value(state_context(0), 0), 1.0);
  EXPECT_EQ(learner.num_updates(), 3);
}

TEST(GreedyPolicy, EmptyTableActsLowestAvailable) {
  const auto policy = extract_greedy_policy({QTable(ContextKind::kAoh, 4)});
  AgentHistory h;
  h.push_observation(0);
  EXPECT_EQ(policy->action(0, h, 0b1100), 2);
  EXPECT_THROW(extract_greedy_policy({QTable(ContextKind::kCentralState, 4)}), std::invalid_argument);
}

TEST(GreedyPolicy, SnapshotIgnoresLaterTraining) {
  std::vector<QTable> tables{QTable(ContextKind::kAoh, 2)};
  const auto policy = extract_greedy_policy(tables);
  tables[0].at({0}, 1) = 1.0;
  AgentHistory h;
  h.push_observation(0);
  EXPECT_EQ(policy->action(0, h, full_mask(2)), 0);
}

TEST(GreedyPolicy, TrainedOnBanditReachesEnumeratedOptimum) {
  const ExplicitDecPomdp env(three_arm_bandit());
  TabularLearner learner(LearnerKind::kIql, ContextKind::kAoh, {3}, 0.05, env.gamma());
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const ResetResult r = reset(env, rng);
    AgentHistory h;
    h.push_observation(r.observation[0]);
    const int a = static_cast<int>(rng.uniform_index(3));
    const StepResult out = step(env, r.state, JointActionId{a}, rng);
    AgentHistory next = h;
    next.push_action(a);
    next.push_observation(out.observation[0]);
    LearnerStep ls;
    ls.keys = {h.elements()};
    ls.actions = {a};
    ls.reward = out.reward;
    ls.next_keys = {next.elements()};
    ls.next_available = {env.available(out.next_state, 0)};
    ls.terminal = out.terminated;
    learner.update(ls);
  }
  const auto policy = extract_greedy_policy(learner.tables());
  double best = -1.0;
  PolicyEnumerator e(env.policy_space());
  do {
    best = std::max(best, evaluate_policy_exact(env, e.current()));
  } while (e.advance());
  EXPECT_DOUBLE_EQ(evaluate_policy_exact(env, *policy), best);
}

TEST(LearnerKind, NamesRoundTrip) {
  EXPECT_EQ(parse_learner_kind("iql"), LearnerKind::kIql);
  EXPECT_EQ(learner_kind_name(parse_learner_kind("vdn")), "vdn");
  EXPECT_THROW(parse_learner_kind("qmix"), std::invalid_argument);
}

}  // namespace
}  // namespace decmarl
