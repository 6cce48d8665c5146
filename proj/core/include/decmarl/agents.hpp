#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "decmarl/decpomdp.hpp"
#include "decmarl/policy.hpp"

namespace decmarl {

// An agent's action-observation history elements, or a one-element central state.
using Context = std::vector<std::int64_t>;

struct ContextHash {
  std::size_t operator()(const Context& c) const {
    std::uint64_t h = 0x243F6A8885A308D3ULL ^ c.size();
    for (std::int64_t x : c) h = splitmix64(h ^ static_cast<std::uint64_t>(x));
    return static_cast<std::size_t>(h);
  }
};

enum class ContextKind { kAoh, kCentralState };

inline Context state_context(StateId s) { return Context{s}; }

class QTable {
 public:
  QTable(ContextKind kind, int num_actions, double default_value = 0.0);

  ContextKind kind() const { return kind_; }
  int num_actions() const { return num_actions_; }
  double default_value() const { return default_value_; }
  std::size_t size() const { return rows_.size(); }

  // Absent entries read as the default and are not inserted.
  double value(const Context& key, int action) const;
  const std::vector<double>* find(const Context& key) const;
  double& at(const Context& key, int action);
  double max_value(const Context& key, ActionMask available) const;
  // Lowest index among maximizers.
  int greedy_action(const Context& key, ActionMask available) const;

  // One row per context, sorted by context.
  std::string serialize() const;
  static QTable parse(const std::string& text);
  bool operator==(const QTable& other) const;

 private:
  ContextKind kind_;
  int num_actions_;
  double default_value_;
  std::unordered_map<Context, std::vector<double>, ContextHash> rows_;
};

// Linear anneal from start to end over anneal_steps, or a fixed value.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t anneal_steps = 50'000;
  bool constant = false;

  static EpsilonSchedule fixed(double value) { return {value, value, 1, true}; }
  double operator()(std::int64_t t) const;
};

int epsilon_greedy_action(const QTable& table, const Context& key, ActionMask available, double epsilon, Rng& rng);

// Per-agent view of one transition.
struct LearnerStep {
  std::vector<Context> keys;
  std::vector<int> actions;
  double reward = 0.0;
  std::vector<Context> next_keys;
  std::vector<ActionMask> next_available;
  bool terminal = false;
};

void iql_update(std::vector<QTable>& tables, const LearnerStep& step, double alpha, double gamma);
// One shared TD error against the summed per-agent values, applied to every
// agent's entry. The joint max of an additive value is the sum of per-agent maxes.
void vdn_update(std::vector<QTable>& tables, const std::vector<QTable>& targets, const LearnerStep& step,
                double alpha, double gamma);

enum class LearnerKind { kIql, kVdn };

LearnerKind parse_learner_kind(const std::string& name);
std::string learner_kind_name(LearnerKind kind);

// Online learner over a set of per-agent tables, with target tables for VDN
// refreshed every target_sync updates.
class TabularLearner {
 public:
  TabularLearner(LearnerKind kind, ContextKind context, const std::vector<int>& actions_per_agent, double alpha,
                 double gamma, std::int64_t target_sync = 200);

  void update(const LearnerStep& step);
  const std::vector<QTable>& tables() const { return tables_; }
  std::vector<QTable>& mutable_tables() { return tables_; }
  std::int64_t num_updates() const { return updates_; }
  LearnerKind kind() const { return kind_; }

 private:
  LearnerKind kind_;
  double alpha_;
  double gamma_;
  std::int64_t target_sync_;
  std::int64_t updates_ = 0;
  std::vector<QTable> tables_;
  std::vector<QTable> targets_;
};

// Greedy decentralized policy read from AOH-keyed tables; a snapshot, so later
// training does not change it.
class GreedyQPolicy final : public DeterministicPolicy {
 public:
  explicit GreedyQPolicy(std::vector<QTable> tables);
  int action(int agent, const AgentHistory& history, ActionMask available) const override;
  const std::vector<QTable>& tables() const { return tables_; }

 private:
  std::vector<QTable> tables_;
};

// Throws std::invalid_argument for central-state tables.
std::shared_ptr<const GreedyQPolicy> extract_greedy_policy(const std::vector<QTable>& tables);

}  // namespace decmarl
