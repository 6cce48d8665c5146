#include "decmarl/enumeration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace decmarl {

namespace {

constexpr double kMaxExactDigits = 20000.0;
constexpr std::int64_t kMaxSlots = 50'000'000;

// Histories reached after t >= 1 steps whose last observation is a given z:
// |Z0| * sum_{u=0}^{t-1} |Z|^u summed over depths 1..H-1.
double log10_tail_multiplicity(const AgentPolicySpace& agent, int horizon) {
  const double z0 = static_cast<double>(agent.initial_observations.size());
  const double z = static_cast<double>(agent.num_observations);
  if (horizon <= 1) return -std::numeric_limits<double>::infinity();
  if (agent.num_observations == 1) return std::log10(z0 * (horizon - 1));
  // z0 * (z^(H-1) - 1) / (z - 1)
  return std::log10(z0) + (horizon - 1) * std::log10(z) + std::log10(1.0 - std::pow(z, -(horizon - 1))) -
         std::log10(z - 1.0);
}

std::optional<std::uint64_t> tail_multiplicity(const AgentPolicySpace& agent, int horizon) {
  if (horizon <= 1) return 0;
  const BigInt z0 = agent.initial_observations.size();
  BigInt total = 0;
  BigInt level = 1;
  for (int t = 1; t < horizon; ++t) {
    total += z0 * level;
    level *= agent.num_observations;
    if (total > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(total);
}

}  // namespace

bool PolicyCount::at_most(std::uint64_t budget) const {
  if (!exact) return false;
  return *exact <= budget;
}

std::string PolicyCount::str() const {
  if (exact) return exact->str();
  std::ostringstream out;
  out << "10^" << log10;
  return out.str();
}

PolicyCount count_joint_policies(const PolicySpace& space) {
  PolicyCount count;
  double log_total = 0.0;
  struct AgentFactors {
    BigInt head = 1;        // product over reset observations
    BigInt tail_base = 1;   // product over the whole alphabet
    std::optional<std::uint64_t> tail_exponent;
  };
  std::vector<AgentFactors> factors;
  for (const auto& agent : space.agents) {
    AgentFactors f;
    double log_head = 0.0;
    for (ObsId z : agent.initial_observations) {
      const int c = mask_size(agent.mask_for(z));
      log_head += std::log10(static_cast<double>(c));
      f.head *= c;
    }
    double log_tail_base = 0.0;
    if (agent.masks_by_observation.empty()) {
      log_tail_base = static_cast<double>(agent.num_observations) * std::log10(static_cast<double>(agent.num_actions));
      if (log_tail_base < kMaxExactDigits) f.tail_base = boost::multiprecision::pow(BigInt(agent.num_actions), static_cast<unsigned>(agent.num_observations));
    } else {
      for (ObsId z = 0; z < agent.num_observations; ++z) {
        const int c = mask_size(agent.mask_for(z));
        log_tail_base += std::log10(static_cast<double>(c));
        if (log_tail_base < kMaxExactDigits && c > 1) f.tail_base *= c;
      }
    }
    const double log_mult = log10_tail_multiplicity(agent, space.horizon);
    const double log_tail = log_tail_base == 0.0 || std::isinf(log_mult) ? 0.0 : log_tail_base * std::pow(10.0, log_mult);
    log_total += log_head + log_tail;
    f.tail_exponent = tail_multiplicity(agent, space.horizon);
    factors.push_back(std::move(f));
  }
  count.log10 = log_total;
  if (log_total < kMaxExactDigits) {
    BigInt total = 1;
    for (const auto& f : factors) {
      total *= f.head;
      if (f.tail_base != 1) {
        if (!f.tail_exponent || *f.tail_exponent > std::numeric_limits<unsigned>::max()) return count;
        total *= boost::multiprecision::pow(f.tail_base, static_cast<unsigned>(*f.tail_exponent));
      }
    }
    count.exact = std::move(total);
  }
  return count;
}

PolicyCount count_joint_policies(const TabularDecPomdp& env) { return count_joint_policies(env.policy_space()); }

BigInt closed_form_policy_count(std::int64_t actions, std::int64_t observations, int horizon, int agents) {
  if (actions < 1 || observations < 1 || horizon < 1 || agents < 1) throw std::invalid_argument("closed form needs positive sizes");
  std::uint64_t histories = 0;
  if (observations == 1) {
    histories = static_cast<std::uint64_t>(horizon);
  } else {
    const BigInt h = (boost::multiprecision::pow(BigInt(observations), static_cast<unsigned>(horizon)) - 1) / (observations - 1);
    histories = static_cast<std::uint64_t>(h);
  }
  const BigInt per_agent = boost::multiprecision::pow(BigInt(actions), static_cast<unsigned>(histories));
  return boost::multiprecision::pow(per_agent, static_cast<unsigned>(agents));
}

// --- layout ------------------------------------------------------------------

HistoryLayout::HistoryLayout(PolicySpace space) : space_(std::move(space)) {
  for (const auto& agent : space_.agents) {
    if (agent.initial_observations.empty()) throw std::invalid_argument("HistoryLayout: agent has no reset observation");
    std::vector<std::int64_t> offsets{0};
    std::int64_t level = static_cast<std::int64_t>(agent.initial_observations.size());
    for (int t = 0; t < space_.horizon; ++t) {
      if (offsets.back() > kMaxSlots - level) throw std::length_error("HistoryLayout: too many histories to tabulate");
      offsets.push_back(offsets.back() + level);
      if (t + 1 < space_.horizon) {
        if (level > kMaxSlots / agent.num_observations) level = kMaxSlots + 1;
        else level *= agent.num_observations;
      }
    }
    offsets_.push_back(std::move(offsets));
  }
}

std::int64_t HistoryLayout::slot_index(int agent, const AgentHistory& history) const {
  const auto& a = space_.agents[static_cast<std::size_t>(agent)];
  const std::size_t t = history.depth();
  if (history.empty() || t >= static_cast<std::size_t>(space_.horizon)) {
    throw std::out_of_range("HistoryLayout: history outside the horizon");
  }
  const auto& z0 = a.initial_observations;
  const auto it = std::lower_bound(z0.begin(), z0.end(), history.observation_at(0));
  if (it == z0.end() || *it != history.observation_at(0)) {
    throw std::out_of_range("HistoryLayout: history starts with an observation that cannot occur at reset");
  }
  std::int64_t index = it - z0.begin();
  for (std::size_t k = 1; k <= t; ++k) {
    const ObsId o = history.observation_at(k);
    if (o < 0 || o >= a.num_observations) throw std::out_of_range("HistoryLayout: observation out of range");
    index = index * a.num_observations + o;
  }
  return offsets_[static_cast<std::size_t>(agent)][t] + index;
}

ObsId HistoryLayout::last_observation(int agent, std::int64_t slot) const {
  const auto& a = space_.agents[static_cast<std::size_t>(agent)];
  const auto& offsets = offsets_[static_cast<std::size_t>(agent)];
  if (slot < offsets[1]) return a.initial_observations[static_cast<std::size_t>(slot)];
  return (slot - offsets[static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), slot) - offsets.begin() - 1)]) %
         a.num_observations;
}

ActionMask HistoryLayout::choices(int agent, std::int64_t slot) const {
  return space_.agents[static_cast<std::size_t>(agent)].mask_for(last_observation(agent, slot));
}

std::shared_ptr<const HistoryLayout> make_layout(const PolicySpace& space) {
  return std::make_shared<const HistoryLayout>(space);
}

// --- tree policies -------------------------------------------------------------

TreePolicy::TreePolicy(std::shared_ptr<const HistoryLayout> layout, std::vector<std::vector<int>> actions)
    : layout_(std::move(layout)), actions_(std::move(actions)) {
  if (actions_.size() != static_cast<std::size_t>(layout_->num_agents())) {
    throw std::invalid_argument("TreePolicy: one action table per agent required");
  }
  for (int j = 0; j < layout_->num_agents(); ++j) {
    if (static_cast<std::int64_t>(actions_[static_cast<std::size_t>(j)].size()) != layout_->num_slots(j)) {
      throw std::invalid_argument("TreePolicy: action table size does not match the history layout");
    }
  }
}

int TreePolicy::action(int agent, const AgentHistory& history, ActionMask) const {
  return actions_[static_cast<std::size_t>(agent)][static_cast<std::size_t>(layout_->slot_index(agent, history))];
}

void TreePolicy::set_action(int agent, std::int64_t slot, int action) {
  actions_[static_cast<std::size_t>(agent)][static_cast<std::size_t>(slot)] = action;
}

TreePolicy first_policy(std::shared_ptr<const HistoryLayout> layout) {
  std::vector<std::vector<int>> actions(static_cast<std::size_t>(layout->num_agents()));
  for (int j = 0; j < layout->num_agents(); ++j) {
    auto& table = actions[static_cast<std::size_t>(j)];
    table.resize(static_cast<std::size_t>(layout->num_slots(j)));
    for (std::int64_t k = 0; k < layout->num_slots(j); ++k) table[static_cast<std::size_t>(k)] = lowest_action(layout->choices(j, k));
  }
  return TreePolicy(std::move(layout), std::move(actions));
}

TreePolicy random_tree_policy(std::shared_ptr<const HistoryLayout> layout, Rng& rng) {
  TreePolicy policy = first_policy(layout);
  for (int j = 0; j < layout->num_agents(); ++j) {
    for (std::int64_t k = 0; k < layout->num_slots(j); ++k) {
      policy.set_action(j, k, uniform_available_action(layout->choices(j, k), rng));
    }
  }
  return policy;
}

PolicyEnumerator::PolicyEnumerator(const PolicySpace& space, std::uint64_t budget)
    : layout_(make_layout(space)), current_(first_policy(layout_)) {
  const PolicyCount total = count_joint_policies(space);
  if (!total.at_most(budget)) {
    throw BudgetExceeded("enumeration budget exceeded: " + total.str() + " joint policies (budget " +
                              std::to_string(budget) + ")");
  }
  count_ = static_cast<std::uint64_t>(*total.exact);
  for (int j = 0; j < layout_->num_agents(); ++j) {
    for (std::int64_t k = 0; k < layout_->num_slots(j); ++k) {
      std::vector<int> choices = mask_actions(layout_->choices(j, k));
      if (choices.size() > 1) slots_.push_back({j, k, std::move(choices)});
    }
  }
  digits_.assign(slots_.size(), 0);
}

bool PolicyEnumerator::advance() {
  for (std::size_t i = slots_.size(); i-- > 0;) {
    auto& slot = slots_[i];
    if (++digits_[i] < slot.choices.size()) {
      current_.set_action(slot.agent, slot.slot, slot.choices[digits_[i]]);
      ++index_;
      return true;
    }
    digits_[i] = 0;
    current_.set_action(slot.agent, slot.slot, slot.choices[0]);
  }
  return false;
}

}  // namespace decmarl
