#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "decmarl/decpomdp.hpp"
#include "decmarl/enumeration.hpp"
#include "decmarl/world_model.hpp"

namespace decmarl {

// Visit counts that stop growing once a pair has been tried m times.
// Observations and available actions are recorded on every step.
class RmaxCounts {
 public:
  RmaxCounts(DecPomdpShape shape, std::int64_t m);

  // True when this transition made its (state, joint action) pair known.
  // Throws std::invalid_argument for rewards outside [0, 1].
  bool record(const Transition& transition);

  std::int64_t m() const { return m_; }
  const DecPomdpShape& shape() const { return shape_; }
  std::int64_t count(StateId s, JointActionId a) const;
  bool known(StateId s, JointActionId a) const { return count(s, a) >= m_; }
  std::int64_t num_known() const { return num_known_; }
  const EmpiricalModel& statistics() const { return stats_; }
  const ObservationModel& observations() const { return observations_; }

 private:
  DecPomdpShape shape_;
  std::int64_t m_;
  std::int64_t num_known_ = 0;
  EmpiricalModel stats_;
  ObservationModel observations_;
};

// D̂_K: empirical on known pairs; every unknown pair moves to an extra
// absorbing state (index |S|) with reward 1 where every action keeps paying 1.
// Agents may pick any action; the policy space is the base env's.
class KnownDecPomdp final : public ExplicitDecPomdp {
 public:
  KnownDecPomdp(DecPomdpTables tables, PolicySpace policy_space)
      : ExplicitDecPomdp(std::move(tables)), policy_space_(std::move(policy_space)) {}

  StateId sink() const { return num_states() - 1; }
  PolicySpace policy_space() const override { return policy_space_; }

 private:
  PolicySpace policy_space_;
};

// Throws std::invalid_argument when the base env's declared rewards leave [0, 1].
std::shared_ptr<const KnownDecPomdp> build_known_decpomdp(const RmaxCounts& counts, const TabularDecPomdp& base);

// Same construction from the true tables of `base` on the pairs where known(s, a) holds.
using KnownPredicate = std::function<bool(StateId, JointActionId)>;
std::shared_ptr<const KnownDecPomdp> build_idealized_known(const TabularDecPomdp& base, const KnownPredicate& known);

enum class PlanMode { kAuto, kExact, kMonteCarlo };

PlanMode parse_plan_mode(const std::string& name);

struct PlanOptions {
  PlanMode mode = PlanMode::kAuto;
  std::uint64_t exact_limit = 100'000;  // auto picks exact up to this many policies
  std::int64_t rollouts = 10'000;
  std::uint64_t budget = kDefaultEnumerationBudget;
};

struct PlanResult {
  TreePolicy policy;
  double value = 0.0;
  std::uint64_t evaluated = 0;
  bool exact = true;
};

// Argmax over every deterministic joint policy; the first maximizer in
// enumeration order wins ties.
PlanResult plan_in_model(const TabularDecPomdp& model, const PlanOptions& options, Rng& rng);

struct RmaxConfig {
  std::int64_t m = 50;
  std::int64_t max_episodes = 2000;
  PlanOptions plan;
};

struct RmaxEpisode {
  std::int64_t episode = 0;
  std::int64_t env_steps_cumulative = 0;
  std::int64_t known_pairs = 0;
  double episode_return = 0.0;  // discounted
  bool replanned = false;
};

std::string rmax_header();
std::string rmax_line(const RmaxEpisode& row);

struct RmaxResult {
  TreePolicy policy;
  double model_value = 0.0;
  std::vector<RmaxEpisode> episodes;
  std::int64_t replans = 0;
  std::int64_t env_steps = 0;
  std::int64_t known_pairs = 0;
};

using RmaxSink = std::function<void(const RmaxEpisode&)>;

RmaxResult rmax_run(const TabularDecPomdp& env, const RmaxConfig& config, std::uint64_t seed, const RmaxSink& sink = {});

// ceil(C * V_max^2 * (S + ln(S A / delta)) / (epsilon^2 (1 - gamma)^2)), V_max = 1 / (1 - gamma).
std::uint64_t theoretical_m(double epsilon, double delta, std::int64_t num_states, std::int64_t num_joint_actions,
                            double gamma, double constant = 1.0);

}  // namespace decmarl
