#include "decmarl/decpomdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace decmarl {

namespace {

MixedRadix make_action_radix(const DecPomdpShape& shape) {
  std::vector<std::int64_t> radices(shape.actions_per_agent.begin(), shape.actions_per_agent.end());
  return MixedRadix(std::move(radices));
}

void validate_shape(const DecPomdpShape& shape) {
  if (shape.num_agents < 1) throw std::invalid_argument("Dec-POMDP needs at least one agent");
  if (shape.num_states < 1) throw std::invalid_argument("Dec-POMDP needs at least one state");
  if (shape.actions_per_agent.size() != static_cast<std::size_t>(shape.num_agents) ||
      shape.obs_per_agent.size() != static_cast<std::size_t>(shape.num_agents)) {
    throw std::invalid_argument("per-agent action/observation sizes must list every agent");
  }
  for (int a : shape.actions_per_agent) {
    if (a < 1 || a > kMaxActionsPerAgent) throw std::invalid_argument("per-agent action count must be in [1, 64]");
  }
  for (ObsId z : shape.obs_per_agent) {
    if (z < 1) throw std::invalid_argument("per-agent observation count must be positive");
  }
  if (!(shape.gamma >= 0.0 && shape.gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (shape.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
}

}  // namespace

std::vector<int> mask_actions(ActionMask mask) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(mask_size(mask)));
  while (mask != 0) {
    out.push_back(lowest_action(mask));
    mask &= mask - 1;
  }
  return out;
}

ActionMask AgentPolicySpace::mask_for(ObsId observation) const {
  if (masks_by_observation.empty()) return full_mask(num_actions);
  if (observation < 0 || observation >= static_cast<ObsId>(masks_by_observation.size())) {
    return full_mask(num_actions);
  }
  const ActionMask m = masks_by_observation[static_cast<std::size_t>(observation)];
  return m == 0 ? full_mask(num_actions) : m;
}

TabularDecPomdp::TabularDecPomdp(DecPomdpShape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  joint_actions_ = make_action_radix(shape_);
}

std::vector<int> TabularDecPomdp::decode_action(JointActionId a) const {
  std::vector<int> out(static_cast<std::size_t>(num_agents()));
  joint_actions_.decode(a, std::span<int>(out));
  return out;
}

std::vector<ObsId> TabularDecPomdp::observe(StateId s, JointActionId previous) const {
  std::vector<ObsId> out(static_cast<std::size_t>(num_agents()));
  observe(s, previous, out);
  return out;
}

bool TabularDecPomdp::joint_action_available(StateId s, JointActionId a) const {
  for (int j = 0; j < num_agents(); ++j) {
    if (!mask_contains(available(s, j), agent_action(a, j))) return false;
  }
  return true;
}

bool TabularDecPomdp::enumerable(std::int64_t limit) const {
  return num_states() <= limit / std::max<std::int64_t>(1, num_joint_actions());
}

StateId TabularDecPomdp::sample_initial(Rng& rng) const {
  std::vector<Successor> support;
  initial_states(support);
  std::vector<double> weights;
  weights.reserve(support.size());
  for (const auto& e : support) weights.push_back(e.probability);
  return support[rng.categorical(weights)].state;
}

StateId TabularDecPomdp::sample_successor(StateId s, JointActionId a, Rng& rng) const {
  std::vector<Successor> row;
  successors(s, a, row);
  if (row.size() == 1) return row.front().state;
  std::vector<double> weights;
  weights.reserve(row.size());
  for (const auto& e : row) weights.push_back(e.probability);
  return row[rng.categorical(weights)].state;
}

PolicySpace TabularDecPomdp::policy_space() const {
  if (!enumerable()) throw std::length_error("policy_space: state-action space too large to scan");
  const int n = num_agents();
  PolicySpace space;
  space.horizon = horizon();
  space.agents.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<char>> seen(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    auto& agent = space.agents[static_cast<std::size_t>(j)];
    agent.num_observations = shape_.obs_per_agent[static_cast<std::size_t>(j)];
    agent.num_actions = shape_.actions_per_agent[static_cast<std::size_t>(j)];
    if (agent.num_observations > 50'000'000) throw std::length_error("policy_space: observation alphabet too large");
    agent.masks_by_observation.assign(static_cast<std::size_t>(agent.num_observations), full_mask(agent.num_actions));
    seen[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(agent.num_observations), 0);
  }
  std::vector<ObsId> obs(static_cast<std::size_t>(n));
  for (StateId s = 0; s < num_states(); ++s) {
    for (JointActionId prev = kNoJointAction; prev < num_joint_actions(); ++prev) {
      observe(s, prev, obs);
      for (int j = 0; j < n; ++j) {
        auto& agent = space.agents[static_cast<std::size_t>(j)];
        const auto z = static_cast<std::size_t>(obs[static_cast<std::size_t>(j)]);
        agent.masks_by_observation[z] &= available(s, j);
        seen[static_cast<std::size_t>(j)][z] = 1;
        if (agent.masks_by_observation[z] == 0) {
          std::ostringstream msg;
          msg << "policy_space: available actions of agent " << j << " are not determined by observation " << z;
          throw std::invalid_argument(msg.str());
        }
      }
    }
  }
  for (int j = 0; j < n; ++j) {
    auto& agent = space.agents[static_cast<std::size_t>(j)];
    for (std::size_t z = 0; z < seen[static_cast<std::size_t>(j)].size(); ++z) {
      if (!seen[static_cast<std::size_t>(j)][z]) agent.masks_by_observation[z] = 0;
    }
  }
  std::vector<Successor> init;
  initial_states(init);
  for (const auto& e : init) {
    observe(e.state, kNoJointAction, obs);
    for (int j = 0; j < n; ++j) space.agents[static_cast<std::size_t>(j)].initial_observations.push_back(obs[static_cast<std::size_t>(j)]);
  }
  for (auto& agent : space.agents) {
    std::sort(agent.initial_observations.begin(), agent.initial_observations.end());
    agent.initial_observations.erase(std::unique(agent.initial_observations.begin(), agent.initial_observations.end()),
                                     agent.initial_observations.end());
  }
  return space;
}

// --- explicit tables --------------------------------------------------------

std::size_t DecPomdpTables::pair_index(StateId s, JointActionId a) const {
  std::int64_t num_actions = 1;
  for (int k : shape.actions_per_agent) num_actions *= k;
  return static_cast<std::size_t>(s * num_actions + a);
}

std::size_t DecPomdpTables::observation_index(StateId s, JointActionId previous, int agent) const {
  std::int64_t num_actions = 1;
  for (int k : shape.actions_per_agent) num_actions *= k;
  return static_cast<std::size_t>((s * (num_actions + 1) + previous + 1) * shape.num_agents + agent);
}

DecPomdpTables DecPomdpTables::allocate(std::string name, DecPomdpShape shape) {
  validate_shape(shape);
  const MixedRadix radix = make_action_radix(shape);
  const std::int64_t pairs = shape.num_states * radix.size();
  if (shape.num_states > kDefaultMaterializeLimit / radix.size()) {
    throw std::length_error("DecPomdpTables: state-action space too large to list");
  }
  DecPomdpTables t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  const auto n = static_cast<std::size_t>(t.shape.num_agents);
  const auto num_states = static_cast<std::size_t>(t.shape.num_states);
  t.initial.assign(num_states, 0.0);
  t.transitions.resize(static_cast<std::size_t>(pairs));
  t.rewards.assign(static_cast<std::size_t>(pairs), RewardSpec{});
  t.terminations.assign(static_cast<std::size_t>(pairs), 0.0);
  t.observations.assign(num_states * static_cast<std::size_t>(radix.size() + 1) * n, 0);
  t.availability.assign(num_states * n, 0);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t j = 0; j < n; ++j) t.availability[s * n + j] = full_mask(t.shape.actions_per_agent[j]);
  }
  return t;
}

void validate_tables(const DecPomdpTables& t) {
  validate_shape(t.shape);
  const MixedRadix radix = make_action_radix(t.shape);
  const auto num_states = static_cast<std::size_t>(t.shape.num_states);
  const auto pairs = num_states * static_cast<std::size_t>(radix.size());
  const auto n = static_cast<std::size_t>(t.shape.num_agents);
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid Dec-POMDP tables: " + what); };
  if (t.initial.size() != num_states) fail("initial distribution has wrong length");
  if (t.transitions.size() != pairs || t.rewards.size() != pairs || t.terminations.size() != pairs) {
    fail("per-pair tables have wrong length");
  }
  if (t.observations.size() != num_states * static_cast<std::size_t>(radix.size() + 1) * n) fail("observation table has wrong length");
  if (t.availability.size() != num_states * n) fail("availability table has wrong length");
  if (!(t.reward_bounds.min <= t.reward_bounds.max)) fail("reward bounds are inverted");

  auto check_row = [&](const std::vector<Successor>& row, const std::string& where) {
    double total = 0.0;
    StateId previous = -1;
    for (const auto& e : row) {
      if (e.state < 0 || e.state >= t.shape.num_states) fail(where + ": successor out of range");
      if (e.state <= previous) fail(where + ": successors must be strictly increasing");
      if (!(e.probability > 0.0 && e.probability <= 1.0 + 1e-12)) fail(where + ": probability outside (0, 1]");
      previous = e.state;
      total += e.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(where + ": row does not sum to 1");
  };
  double d0_total = 0.0;
  for (double p : t.initial) {
    if (!(p >= 0.0 && p <= 1.0 + 1e-12)) fail("initial probability outside [0, 1]");
    d0_total += p;
  }
  if (std::abs(d0_total - 1.0) > 1e-9) fail("initial distribution does not sum to 1");
  for (std::size_t i = 0; i < pairs; ++i) {
    check_row(t.transitions[i], "transition row " + std::to_string(i));
    if (!std::isfinite(t.rewards[i].mean) || !(t.rewards[i].noise >= 0.0)) fail("reward not finite");
    if (t.rewards[i].mean - t.rewards[i].noise < t.reward_bounds.min - 1e-12 ||
        t.rewards[i].mean + t.rewards[i].noise > t.reward_bounds.max + 1e-12) {
      fail("reward support outside declared bounds at pair " + std::to_string(i));
    }
    if (!(t.terminations[i] >= 0.0 && t.terminations[i] <= 1.0)) fail("termination probability outside [0, 1]");
  }
  for (std::size_t i = 0; i < t.observations.size(); ++i) {
    const std::size_t j = i % n;
    if (t.observations[i] < 0 || t.observations[i] >= t.shape.obs_per_agent[j]) fail("observation out of range");
  }
  for (std::size_t i = 0; i < t.availability.size(); ++i) {
    const std::size_t j = i % n;
    const ActionMask m = t.availability[i];
    if (m == 0) fail("empty available-action set at state " + std::to_string(i / n));
    if ((m & ~full_mask(t.shape.actions_per_agent[j])) != 0) fail("available action out of range");
  }
}

DecPomdpTables materialize(const TabularDecPomdp& env, std::int64_t limit) {
  if (!env.enumerable(limit)) throw std::length_error("materialize: state-action space too large to list");
  DecPomdpTables t = DecPomdpTables::allocate(env.name(), env.shape());
  t.reward_bounds = env.reward_bounds();
  std::vector<Successor> init;
  env.initial_states(init);
  for (const auto& e : init) t.initial[static_cast<std::size_t>(e.state)] += e.probability;
  const int n = env.num_agents();
  std::vector<ObsId> obs(static_cast<std::size_t>(n));
  for (StateId s = 0; s < env.num_states(); ++s) {
    for (JointActionId a = 0; a < env.num_joint_actions(); ++a) {
      const auto i = t.pair_index(s, a);
      env.successors(s, a, t.transitions[i]);
      t.rewards[i] = env.reward(s, a);
      t.terminations[i] = env.termination(s, a);
    }
    for (JointActionId prev = kNoJointAction; prev < env.num_joint_actions(); ++prev) {
      env.observe(s, prev, obs);
      for (int j = 0; j < n; ++j) t.observations[t.observation_index(s, prev, j)] = obs[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < n; ++j) t.availability[static_cast<std::size_t>(s * n + j)] = env.available(s, j);
  }
  return t;
}

ExplicitDecPomdp::ExplicitDecPomdp(DecPomdpTables tables)
    : TabularDecPomdp(tables.shape), tables_(std::move(tables)) {
  validate_tables(tables_);
}

void ExplicitDecPomdp::successors(StateId s, JointActionId a, std::vector<Successor>& out) const {
  out = tables_.transitions[tables_.pair_index(s, a)];
}

RewardSpec ExplicitDecPomdp::reward(StateId s, JointActionId a) const { return tables_.rewards[tables_.pair_index(s, a)]; }

double ExplicitDecPomdp::termination(StateId s, JointActionId a) const {
  return tables_.terminations[tables_.pair_index(s, a)];
}

void ExplicitDecPomdp::observe(StateId s, JointActionId previous, std::span<ObsId> out) const {
  const auto base = tables_.observation_index(s, previous, 0);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = tables_.observations[base + j];
}

ActionMask ExplicitDecPomdp::available(StateId s, int agent) const {
  return tables_.availability[static_cast<std::size_t>(s * num_agents() + agent)];
}

void ExplicitDecPomdp::initial_states(std::vector<Successor>& out) const {
  out.clear();
  for (std::size_t s = 0; s < tables_.initial.size(); ++s) {
    if (tables_.initial[s] > 0.0) out.push_back({static_cast<StateId>(s), tables_.initial[s]});
  }
}

StateId ExplicitDecPomdp::sample_initial(Rng& rng) const {
  return static_cast<StateId>(rng.categorical(tables_.initial));
}

StateId ExplicitDecPomdp::sample_successor(StateId s, JointActionId a, Rng& rng) const {
  const auto& row = tables_.transitions[tables_.pair_index(s, a)];
  if (row.size() == 1) return row.front().state;
  const double target = rng.uniform();
  double cumulative = 0.0;
  for (const auto& e : row) {
    cumulative += e.probability;
    if (target < cumulative) return e.state;
  }
  return row.back().state;
}

// --- execution ---------------------------------------------------------------

double Trajectory::discounted_return(double gamma) const {
  double total = 0.0;
  double discount = 1.0;
  for (const auto& tr : transitions) {
    total += discount * tr.reward;
    discount *= gamma;
  }
  return total;
}

double Trajectory::total_reward() const {
  double total = 0.0;
  for (const auto& tr : transitions) total += tr.reward;
  return total;
}

double sample_reward(const RewardSpec& spec, Rng& rng) {
  if (spec.noise <= 0.0) return spec.mean;
  return spec.mean + spec.noise * (2.0 * rng.uniform() - 1.0);
}

ResetResult reset(const TabularDecPomdp& env, Rng& rng) {
  ResetResult out;
  out.state = env.sample_initial(rng);
  out.observation = env.observe(out.state, kNoJointAction);
  return out;
}

StepResult step(const TabularDecPomdp& env, StateId s, JointActionId joint_action, Rng& rng) {
  for (int j = 0; j < env.num_agents(); ++j) {
    const int a = env.agent_action(joint_action, j);
    if (!mask_contains(env.available(s, j), a)) {
      std::ostringstream msg;
      msg << "step: action " << a << " of agent " << j << " is not available in state " << s;
      throw std::invalid_argument(msg.str());
    }
  }
  StepResult out;
  out.next_state = env.sample_successor(s, joint_action, rng);
  out.reward = sample_reward(env.reward(s, joint_action), rng);
  out.terminated = rng.bernoulli(env.termination(s, joint_action));
  out.observation = env.observe(out.next_state, joint_action);
  return out;
}

StepResult step(const TabularDecPomdp& env, StateId s, std::span<const int> joint_action, Rng& rng) {
  if (joint_action.size() != static_cast<std::size_t>(env.num_agents())) {
    throw std::invalid_argument("step: joint action must name one action per agent");
  }
  for (int j = 0; j < env.num_agents(); ++j) {
    const int a = joint_action[static_cast<std::size_t>(j)];
    if (a < 0 || a >= env.num_actions(j) || !mask_contains(env.available(s, j), a)) {
      std::ostringstream msg;
      msg << "step: action " << a << " of agent " << j << " is not available in state " << s;
      throw std::invalid_argument(msg.str());
    }
  }
  return step(env, s, env.encode_action(joint_action), rng);
}

}  // namespace decmarl
