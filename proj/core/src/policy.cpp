#include "decmarl/policy.hpp"

#include <stdexcept>

namespace decmarl {

int uniform_available_action(ActionMask available, Rng& rng) {
  if (available == 0) throw std::invalid_argument("no available action");
  std::size_t k = rng.uniform_index(static_cast<std::size_t>(mask_size(available)));
  ActionMask m = available;
  while (k-- > 0) m &= m - 1;
  return lowest_action(m);
}

int JointPolicy::sample(int agent, const AgentHistory& history, ActionMask available, Rng& rng) const {
  std::vector<ActionProbability> dist;
  distribution(agent, history, available, dist);
  if (dist.size() == 1) return dist.front().action;
  const double target = rng.uniform();
  double cumulative = 0.0;
  for (const auto& e : dist) {
    cumulative += e.probability;
    if (target < cumulative) return e.action;
  }
  return dist.back().action;
}

void DeterministicPolicy::distribution(int agent, const AgentHistory& history, ActionMask available,
                                       std::vector<ActionProbability>& out) const {
  out.clear();
  out.push_back({action(agent, history, available), 1.0});
}

int DeterministicPolicy::sample(int agent, const AgentHistory& history, ActionMask available, Rng&) const {
  return action(agent, history, available);
}

void UniformRandomPolicy::distribution(int, const AgentHistory&, ActionMask available,
                                       std::vector<ActionProbability>& out) const {
  out.clear();
  const double p = 1.0 / mask_size(available);
  for (int a : mask_actions(available)) out.push_back({a, p});
}

int UniformRandomPolicy::sample(int, const AgentHistory&, ActionMask available, Rng& rng) const {
  return uniform_available_action(available, rng);
}

}  // namespace decmarl
