#include <algorithm>
#include <stdexcept>

#include "decmarl/envs.hpp"

namespace decmarl {

namespace {

// Symmetric Dirichlet(1) over k outcomes via normalized exponentials. Exact
// zeros are dropped so rows list only positive-probability successors.
std::vector<Successor> dirichlet_row(StateId k, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& x : w) {
    x = rng.exponential();
    total += x;
  }
  std::vector<Successor> row;
  if (total <= 0.0) {
    row.push_back({static_cast<StateId>(rng.uniform_index(static_cast<std::size_t>(k))), 1.0});
    return row;
  }
  for (StateId s = 0; s < k; ++s) {
    const double p = w[static_cast<std::size_t>(s)] / total;
    if (p > 0.0) row.push_back({s, p});
  }
  return row;
}

}  // namespace

DecPomdpTables random_decpomdp_tables(const RandomDecPomdpSpec& spec, Rng& rng) {
  if (spec.actions_per_agent.size() != static_cast<std::size_t>(spec.num_agents) ||
      spec.obs_per_agent.size() != static_cast<std::size_t>(spec.num_agents)) {
    throw std::invalid_argument("random Dec-POMDP: per-agent sizes must list every agent");
  }
  if (spec.termination_rate < 0.0 || spec.termination_rate > 1.0) {
    throw std::invalid_argument("random Dec-POMDP: termination rate must lie in [0, 1]");
  }
  if (spec.reward_noise < 0.0) throw std::invalid_argument("random Dec-POMDP: reward noise must be non-negative");
  DecPomdpShape shape;
  shape.num_agents = spec.num_agents;
  shape.num_states = spec.num_states;
  shape.actions_per_agent = spec.actions_per_agent;
  shape.obs_per_agent = spec.obs_per_agent;
  shape.gamma = spec.gamma;
  shape.horizon = spec.horizon;
  DecPomdpTables t = DecPomdpTables::allocate("random", shape);
  t.reward_bounds = {0.0, 1.0};

  for (const auto& e : dirichlet_row(spec.num_states, rng)) t.initial[static_cast<std::size_t>(e.state)] = e.probability;
  const std::size_t pairs = t.transitions.size();
  for (std::size_t i = 0; i < pairs; ++i) {
    t.transitions[i] = dirichlet_row(spec.num_states, rng);
    RewardSpec& r = t.rewards[i];
    r.mean = rng.uniform();
    r.noise = std::min({spec.reward_noise, r.mean, 1.0 - r.mean});
    t.terminations[i] = spec.termination_rate > 0.0 ? spec.termination_rate * rng.uniform() : 0.0;
  }
  const auto n = static_cast<std::size_t>(spec.num_agents);
  const std::size_t rows = t.observations.size() / n;
  const std::size_t per_state = rows / static_cast<std::size_t>(spec.num_states);
  for (std::size_t row = 0; row < rows; ++row) {
    const bool at_reset = row % per_state == 0;
    for (std::size_t j = 0; j < n; ++j) {
      ObsId& o = t.observations[row * n + j];
      o = spec.blank_initial_observation && at_reset
              ? 0
              : static_cast<ObsId>(rng.uniform_index(static_cast<std::size_t>(spec.obs_per_agent[j])));
    }
  }
  return t;
}

EnvPtr make_random_decpomdp(const RandomDecPomdpSpec& spec, Rng& rng) {
  return std::make_shared<ExplicitDecPomdp>(random_decpomdp_tables(spec, rng));
}

RandomDecPomdpSpec canonical_tiny_spec() {
  RandomDecPomdpSpec spec;
  spec.num_agents = 2;
  spec.num_states = 3;
  spec.actions_per_agent = {2, 2};
  spec.obs_per_agent = {2, 2};
  spec.horizon = 2;
  spec.gamma = 0.9;
  spec.blank_initial_observation = true;
  return spec;
}

// --- normalization -------------------------------------------------------------

NormalizedDecPomdp::NormalizedDecPomdp(EnvPtr base) : TabularDecPomdp(base->shape()), base_(std::move(base)) {
  const RewardBounds b = base_->reward_bounds();
  if (!(b.max > b.min)) throw std::invalid_argument("normalize_rewards: reward bounds must satisfy max > min");
  map_.offset = b.min;
  map_.scale = b.max - b.min;
}

RewardSpec NormalizedDecPomdp::reward(StateId s, JointActionId a) const {
  const RewardSpec r = base_->reward(s, a);
  if (map_.identity()) return r;
  return {map_.apply(r.mean), r.noise / map_.scale};
}

std::shared_ptr<const NormalizedDecPomdp> normalize_rewards(EnvPtr env) {
  return std::make_shared<NormalizedDecPomdp>(std::move(env));
}

}  // namespace decmarl
