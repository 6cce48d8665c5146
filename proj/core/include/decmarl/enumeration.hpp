#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "decmarl/decpomdp.hpp"
#include "decmarl/evaluation.hpp"
#include "decmarl/policy.hpp"

namespace decmarl {

using BigInt = boost::multiprecision::cpp_int;

inline constexpr std::uint64_t kDefaultEnumerationBudget = 10'000'000;

// Number of deterministic joint policies. `exact` is empty only when the
// count has more digits than is sensible to materialize.
struct PolicyCount {
  std::optional<BigInt> exact;
  double log10 = 0.0;

  bool at_most(std::uint64_t budget) const;
  std::string str() const;
};

PolicyCount count_joint_policies(const PolicySpace& space);
PolicyCount count_joint_policies(const TabularDecPomdp& env);

// (|A|^((|O|^H - 1) / (|O| - 1)))^N: every agent shares |A| and |O|, all
// actions are always available and the reset observation is unique.
BigInt closed_form_policy_count(std::int64_t actions, std::int64_t observations, int horizon, int agents);

// Addresses one slot per policy-relevant history. A history (o_0, ..., o_t)
// of agent j is addressed by its observations only; own actions are implied
// by a deterministic policy. Slots are ordered by depth, then lexicographically.
class HistoryLayout {
 public:
  explicit HistoryLayout(PolicySpace space);

  const PolicySpace& space() const { return space_; }
  int num_agents() const { return static_cast<int>(space_.agents.size()); }
  std::int64_t num_slots(int agent) const { return offsets_[static_cast<std::size_t>(agent)].back(); }
  std::int64_t slot_index(int agent, const AgentHistory& history) const;
  ObsId last_observation(int agent, std::int64_t slot) const;
  ActionMask choices(int agent, std::int64_t slot) const;

 private:
  PolicySpace space_;
  std::vector<std::vector<std::int64_t>> offsets_;  // [agent][depth], plus total
};

// Deterministic joint policy given as one action per history slot.
class TreePolicy final : public DeterministicPolicy {
 public:
  TreePolicy(std::shared_ptr<const HistoryLayout> layout, std::vector<std::vector<int>> actions);

  int action(int agent, const AgentHistory& history, ActionMask available) const override;

  const HistoryLayout& layout() const { return *layout_; }
  const std::vector<std::vector<int>>& actions() const { return actions_; }
  void set_action(int agent, std::int64_t slot, int action);

  bool operator==(const TreePolicy& other) const { return actions_ == other.actions_; }

 private:
  std::shared_ptr<const HistoryLayout> layout_;
  std::vector<std::vector<int>> actions_;
};

// Walks every deterministic joint policy once, in lexicographic order over the
// concatenated per-agent slot tables (last slot of the last agent fastest).
class PolicyEnumerator {
 public:
  explicit PolicyEnumerator(const PolicySpace& space, std::uint64_t budget = kDefaultEnumerationBudget);

  std::uint64_t count() const { return count_; }
  const TreePolicy& current() const { return current_; }
  std::uint64_t index() const { return index_; }
  // Moves to the next policy; false after the last one.
  bool advance();

 private:
  struct Slot {
    int agent;
    std::int64_t slot;
    std::vector<int> choices;
  };
  std::shared_ptr<const HistoryLayout> layout_;
  std::vector<Slot> slots_;
  std::vector<std::size_t> digits_;
  TreePolicy current_;
  std::uint64_t count_ = 0;
  std::uint64_t index_ = 0;
};

std::shared_ptr<const HistoryLayout> make_layout(const PolicySpace& space);
TreePolicy first_policy(std::shared_ptr<const HistoryLayout> layout);
TreePolicy random_tree_policy(std::shared_ptr<const HistoryLayout> layout, Rng& rng);

}  // namespace decmarl
