#pragma once

#include <functional>
#include <vector>

#include "decmarl/decpomdp.hpp"

namespace decmarl {

struct ActionProbability {
  int action = 0;
  double probability = 0.0;
};

// Decentralized joint policy: each agent conditions only on its own
// action-observation history and the actions available to it.
class JointPolicy {
 public:
  virtual ~JointPolicy() = default;

  virtual void distribution(int agent, const AgentHistory& history, ActionMask available,
                            std::vector<ActionProbability>& out) const = 0;
  virtual int sample(int agent, const AgentHistory& history, ActionMask available, Rng& rng) const;
  virtual bool deterministic() const { return false; }
};

class DeterministicPolicy : public JointPolicy {
 public:
  virtual int action(int agent, const AgentHistory& history, ActionMask available) const = 0;

  void distribution(int agent, const AgentHistory& history, ActionMask available,
                    std::vector<ActionProbability>& out) const final;
  int sample(int agent, const AgentHistory& history, ActionMask available, Rng& rng) const final;
  bool deterministic() const final { return true; }
};

class FunctionPolicy final : public DeterministicPolicy {
 public:
  using Rule = std::function<int(int agent, const AgentHistory& history, ActionMask available)>;
  explicit FunctionPolicy(Rule rule) : rule_(std::move(rule)) {}
  int action(int agent, const AgentHistory& history, ActionMask available) const override {
    return rule_(agent, history, available);
  }

 private:
  Rule rule_;
};

// Lowest-index available action everywhere.
class FirstActionPolicy final : public DeterministicPolicy {
 public:
  int action(int, const AgentHistory&, ActionMask available) const override { return lowest_action(available); }
};

class UniformRandomPolicy final : public JointPolicy {
 public:
  void distribution(int agent, const AgentHistory& history, ActionMask available,
                    std::vector<ActionProbability>& out) const override;
  int sample(int agent, const AgentHistory& history, ActionMask available, Rng& rng) const override;
};

int uniform_available_action(ActionMask available, Rng& rng);

}  // namespace decmarl
