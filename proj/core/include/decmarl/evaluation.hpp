#pragma once

#include <cstdint>
#include <stdexcept>

#include "decmarl/decpomdp.hpp"
#include "decmarl/policy.hpp"

namespace decmarl {

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Trajectory run_episode(const TabularDecPomdp& env, const JointPolicy& policy, Rng& rng);

struct ExactOptions {
  std::int64_t node_budget = 10'000'000;
  // Visit successors and joint actions in descending order instead of ascending.
  bool reverse_order = false;
  // Discount used for J; negative means the env's gamma.
  double gamma = -1.0;
};

// J(pi) = E_{s ~ d0}[V^pi(s)] by forward expansion of the reachable
// (state, per-agent history, t) tree. Throws BudgetExceeded when the tree has
// more than node_budget nodes.
double evaluate_policy_exact(const TabularDecPomdp& env, const JointPolicy& policy, const ExactOptions& options = {});

// V^pi(s) for the episode started in s regardless of d0.
double evaluate_policy_exact_from(const TabularDecPomdp& env, const JointPolicy& policy, StateId start,
                                  const ExactOptions& options = {});

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

MonteCarloEstimate evaluate_policy_mc(const TabularDecPomdp& env, const JointPolicy& policy, std::int64_t num_episodes,
                                      Rng& rng);

}  // namespace decmarl
