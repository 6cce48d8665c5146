#include "decmarl/agents.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace decmarl {

namespace {

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

QTable::QTable(ContextKind kind, int num_actions, double default_value)
    : kind_(kind), num_actions_(num_actions), default_value_(default_value) {
  if (num_actions < 1) throw std::invalid_argument("QTable needs at least one action");
}

double QTable::value(const Context& key, int action) const {
  const auto it = rows_.find(key);
  return it == rows_.end() ? default_value_ : it->second[static_cast<std::size_t>(action)];
}

const std::vector<double>* QTable::find(const Context& key) const {
  const auto it = rows_.find(key);
  return it == rows_.end() ? nullptr : &it->second;
}

double& QTable::at(const Context& key, int action) {
  auto it = rows_.find(key);
  if (it == rows_.end()) {
    it = rows_.emplace(key, std::vector<double>(static_cast<std::size_t>(num_actions_), default_value_)).first;
  }
  return it->second[static_cast<std::size_t>(action)];
}

double QTable::max_value(const Context& key, ActionMask available) const {
  const std::vector<double>* row = find(key);
  if (row == nullptr) return default_value_;
  double best = -std::numeric_limits<double>::infinity();
  for (ActionMask m = available; m != 0; m &= m - 1) best = std::max(best, (*row)[static_cast<std::size_t>(lowest_action(m))]);
  return best;
}

int QTable::greedy_action(const Context& key, ActionMask available) const {
  const std::vector<double>* row = find(key);
  if (row == nullptr) return lowest_action(available);
  int best = -1;
  double best_value = 0.0;
  for (ActionMask m = available; m != 0; m &= m - 1) {
    const int a = lowest_action(m);
    const double v = (*row)[static_cast<std::size_t>(a)];
    if (best < 0 || v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

std::string QTable::serialize() const {
  std::vector<const Context*> keys;
  keys.reserve(rows_.size());
  for (const auto& [k, v] : rows_) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](const Context* x, const Context* y) { return *x < *y; });
  std::ostringstream out;
  out << "qtable " << (kind_ == ContextKind::kAoh ? "aoh" : "central-state") << ' ' << num_actions_ << ' '
      << number(default_value_) << ' ' << rows_.size() << '\n';
  for (const Context* k : keys) {
    out << k->size();
    for (std::int64_t x : *k) out << ' ' << x;
    out << " :";
    for (double v : rows_.at(*k)) out << ' ' << number(v);
    out << '\n';
  }
  return out.str();
}

QTable QTable::parse(const std::string& text) {
  std::istringstream in(text);
  std::string word, kind;
  int num_actions = 0;
  std::string default_text;
  std::size_t rows = 0;
  if (!(in >> word >> kind >> num_actions >> default_text >> rows) || word != "qtable") {
    throw std::invalid_argument("QTable::parse: bad header");
  }
  if (kind != "aoh" && kind != "central-state") throw std::invalid_argument("QTable::parse: unknown context kind " + kind);
  QTable table(kind == "aoh" ? ContextKind::kAoh : ContextKind::kCentralState, num_actions, std::stod(default_text));
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t len = 0;
    if (!(in >> len) || len > 4096) throw std::invalid_argument("QTable::parse: bad row");
    Context key(len);
    for (auto& x : key) {
      if (!(in >> x)) throw std::invalid_argument("QTable::parse: bad context");
    }
    if (!(in >> word) || word != ":") throw std::invalid_argument("QTable::parse: missing ':'");
    for (int a = 0; a < num_actions; ++a) {
      if (!(in >> word)) throw std::invalid_argument("QTable::parse: truncated row");
      table.at(key, a) = std::stod(word);
    }
  }
  return table;
}

bool QTable::operator==(const QTable& other) const {
  return kind_ == other.kind_ && num_actions_ == other.num_actions_ && default_value_ == other.default_value_ &&
         rows_ == other.rows_;
}

double EpsilonSchedule::operator()(std::int64_t t) const {
  if (constant) return start;
  if (anneal_steps <= 0) return end;
  const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(anneal_steps));
  return frac >= 1.0 ? end : start + (end - start) * frac;
}

int epsilon_greedy_action(const QTable& table, const Context& key, ActionMask available, double epsilon, Rng& rng) {
  if (available == 0) throw std::invalid_argument("epsilon_greedy_action: no available action");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return uniform_available_action(available, rng);
  return table.greedy_action(key, available);
}

void iql_update(std::vector<QTable>& tables, const LearnerStep& step, double alpha, double gamma) {
  for (std::size_t j = 0; j < tables.size(); ++j) {
    QTable& q = tables[j];
    double target = step.reward;
    if (!step.terminal) target += gamma * q.max_value(step.next_keys[j], step.next_available[j]);
    double& entry = q.at(step.keys[j], step.actions[j]);
    entry += alpha * (target - entry);
  }
}

void vdn_update(std::vector<QTable>& tables, const std::vector<QTable>& targets, const LearnerStep& step,
                double alpha, double gamma) {
  double y = step.reward;
  if (!step.terminal) {
    double bootstrap = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) bootstrap += targets[j].max_value(step.next_keys[j], step.next_available[j]);
    y += gamma * bootstrap;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < tables.size(); ++j) sum += tables[j].value(step.keys[j], step.actions[j]);
  const double delta = y - sum;
  for (std::size_t j = 0; j < tables.size(); ++j) tables[j].at(step.keys[j], step.actions[j]) += alpha * delta;
}

LearnerKind parse_learner_kind(const std::string& name) {
  if (name == "iql") return LearnerKind::kIql;
  if (name == "vdn") return LearnerKind::kVdn;
  throw std::invalid_argument("unknown learner '" + name + "' (expected iql or vdn)");
}

std::string learner_kind_name(LearnerKind kind) { return kind == LearnerKind::kIql ? "iql" : "vdn"; }

TabularLearner::TabularLearner(LearnerKind kind, ContextKind context, const std::vector<int>& actions_per_agent,
                               double alpha, double gamma, std::int64_t target_sync)
    : kind_(kind), alpha_(alpha), gamma_(gamma), target_sync_(std::max<std::int64_t>(1, target_sync)) {
  for (int a : actions_per_agent) tables_.emplace_back(context, a);
  targets_ = tables_;
}

void TabularLearner::update(const LearnerStep& step) {
  if (kind_ == LearnerKind::kIql) {
    iql_update(tables_, step, alpha_, gamma_);
  } else {
    vdn_update(tables_, targets_, step, alpha_, gamma_);
  }
  if (++updates_ % target_sync_ == 0 && kind_ == LearnerKind::kVdn) targets_ = tables_;
}

GreedyQPolicy::GreedyQPolicy(std::vector<QTable> tables) : tables_(std::move(tables)) {
  for (const auto& t : tables_) {
    if (t.kind() != ContextKind::kAoh) {
      throw std::invalid_argument("greedy decentralized policy needs tables keyed by action-observation history");
    }
  }
}

int GreedyQPolicy::action(int agent, const AgentHistory& history, ActionMask available) const {
  return tables_[static_cast<std::size_t>(agent)].greedy_action(history.elements(), available);
}

std::shared_ptr<const GreedyQPolicy> extract_greedy_policy(const std::vector<QTable>& tables) {
  return std::make_shared<GreedyQPolicy>(tables);
}

}  // namespace decmarl
