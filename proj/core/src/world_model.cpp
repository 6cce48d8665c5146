#include "decmarl/world_model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace decmarl {

namespace {

const std::vector<std::size_t> kNoIndices;

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_number(const std::string& word) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(word, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != word.size() || word.empty()) throw std::invalid_argument("bad number '" + word + "'");
  return v;
}

template <typename T>
T read(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw std::invalid_argument(std::string("parse error reading ") + what);
  return v;
}

void expect(std::istream& in, const std::string& keyword) {
  std::string w;
  if (!(in >> w) || w != keyword) throw std::invalid_argument("parse error: expected '" + keyword + "', found '" + w + "'");
}

template <typename Map>
std::vector<typename Map::key_type> sorted_keys(const Map& map) {
  std::vector<typename Map::key_type> keys;
  keys.reserve(map.size());
  for (const auto& [k, v] : map) keys.push_back(k);
  return keys;
}

std::vector<PairKey> sorted_pairs(std::vector<PairKey> keys) {
  std::sort(keys.begin(), keys.end(),
            [](const PairKey& x, const PairKey& y) { return std::tie(x.state, x.action) < std::tie(y.state, y.action); });
  return keys;
}

}  // namespace

// --- dataset ----------------------------------------------------------------

void Dataset::append(Transition t) {
  const PairKey key{t.state, t.joint_action};
  auto [it, inserted] = index_.try_emplace(key);
  if (inserted) pair_order_.push_back(key);
  it->second.push_back(records_.size());
  records_.push_back(std::move(t));
}

void Dataset::append(const Trajectory& trajectory) {
  for (const auto& t : trajectory.transitions) append(t);
}

const std::vector<std::size_t>& Dataset::indices(StateId s, JointActionId a) const {
  const auto it = index_.find({s, a});
  return it == index_.end() ? kNoIndices : it->second;
}

std::string Dataset::serialize() const {
  std::ostringstream out;
  for (const auto& t : records_) {
    out << t.timestep << ' ' << t.state << ' ' << t.previous_joint_action << ' ' << t.joint_action << ' '
        << number(t.reward) << ' ' << t.next_state << ' ' << (t.terminated ? 1 : 0) << ' ' << t.observation.size();
    for (ObsId o : t.observation) out << ' ' << o;
    for (ActionMask m : t.available) out << ' ' << m;
    for (ObsId o : t.next_observation) out << ' ' << o;
    out << '\n';
  }
  return out.str();
}

Dataset Dataset::parse(const std::string& text) {
  Dataset d;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    Transition t;
    t.timestep = read<int>(in, "timestep");
    t.state = read<StateId>(in, "state");
    t.previous_joint_action = read<JointActionId>(in, "previous action");
    t.joint_action = read<JointActionId>(in, "action");
    t.reward = parse_number(read<std::string>(in, "reward"));
    t.next_state = read<StateId>(in, "next state");
    t.terminated = read<int>(in, "terminated") != 0;
    const auto n = read<std::size_t>(in, "agent count");
    if (n > 64) throw std::invalid_argument("dataset line has too many agents");
    t.observation.resize(n);
    t.available.resize(n);
    t.next_observation.resize(n);
    for (auto& o : t.observation) o = read<ObsId>(in, "observation");
    for (auto& m : t.available) m = read<ActionMask>(in, "availability");
    for (auto& o : t.next_observation) o = read<ObsId>(in, "next observation");
    d.append(std::move(t));
  }
  return d;
}

// --- empirical model -------------------------------------------------------------

double PairStatistics::probability(StateId s) const {
  const auto it = std::lower_bound(successors.begin(), successors.end(), s,
                                   [](const auto& e, StateId x) { return e.first < x; });
  if (it == successors.end() || it->first != s || count == 0) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(count);
}

void EmpiricalModel::add(StateId s, JointActionId a, double reward, StateId next, bool terminated) {
  PairStatistics& st = pairs_[{s, a}];
  auto it = std::lower_bound(st.successors.begin(), st.successors.end(), next,
                             [](const auto& e, StateId x) { return e.first < x; });
  if (it != st.successors.end() && it->first == next) ++it->second;
  else st.successors.insert(it, {next, 1});
  ++st.count;
  st.reward_sum += reward;
  if (terminated) ++st.terminations;
}

void EmpiricalModel::set(StateId s, JointActionId a, PairStatistics stats) {
  if (!std::is_sorted(stats.successors.begin(), stats.successors.end())) {
    throw std::invalid_argument("EmpiricalModel::set: successors must be sorted by state");
  }
  pairs_[{s, a}] = std::move(stats);
}

const PairStatistics* EmpiricalModel::find(StateId s, JointActionId a) const {
  const auto it = pairs_.find({s, a});
  return it == pairs_.end() ? nullptr : &it->second;
}

std::vector<Successor> EmpiricalModel::dynamics(StateId s, JointActionId a) const {
  std::vector<Successor> out;
  const PairStatistics* st = find(s, a);
  if (st == nullptr) return out;
  for (const auto& [next, c] : st->successors) {
    out.push_back({next, static_cast<double>(c) / static_cast<double>(st->count)});
  }
  return out;
}

StateId EmpiricalModel::sample_successor(const PairStatistics& stats, Rng& rng) const {
  if (stats.successors.size() == 1) return stats.successors.front().first;
  auto target = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(stats.count)));
  for (const auto& [next, c] : stats.successors) {
    if (target < c) return next;
    target -= c;
  }
  return stats.successors.back().first;
}

bool EmpiricalModel::operator==(const EmpiricalModel& other) const {
  if (pairs_.size() != other.pairs_.size()) return false;
  for (const auto& [k, v] : pairs_) {
    const PairStatistics* o = other.find(k.state, k.action);
    if (o == nullptr || o->successors != v.successors || o->count != v.count || o->reward_sum != v.reward_sum ||
        o->terminations != v.terminations) {
      return false;
    }
  }
  return true;
}

// --- deterministic components -------------------------------------------------------------

void ObservationModel::record(StateId s, JointActionId previous, const std::vector<ObsId>& observation) {
  auto [it, inserted] = table_.try_emplace(PairKey{s, previous}, observation);
  if (!inserted && it->second != observation) {
    std::ostringstream msg;
    msg << "deterministic-observation assumption violated at state " << s << " after joint action " << previous;
    throw std::runtime_error(msg.str());
  }
  by_state_.try_emplace(s, observation);
}

const std::vector<ObsId>* ObservationModel::find(StateId s, JointActionId previous) const {
  const auto it = table_.find({s, previous});
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<ObsId> ObservationModel::lookup(StateId s, JointActionId previous, int num_agents) const {
  if (const auto* o = find(s, previous)) return *o;
  const auto it = by_state_.find(s);
  if (it != by_state_.end()) return it->second;
  return std::vector<ObsId>(static_cast<std::size_t>(num_agents), kNullObservation);
}

void AvailabilityModel::record(StateId s, const std::vector<ActionMask>& masks) {
  auto [it, inserted] = table_.try_emplace(s, masks);
  if (!inserted && it->second != masks) {
    std::ostringstream msg;
    msg << "available actions of state " << s << " changed between visits";
    throw std::runtime_error(msg.str());
  }
}

const std::vector<ActionMask>* AvailabilityModel::find(StateId s) const {
  const auto it = table_.find(s);
  return it == table_.end() ? nullptr : &it->second;
}

ActionMask AvailabilityModel::lookup(StateId s, int agent, int num_actions) const {
  if (const auto* m = find(s)) return (*m)[static_cast<std::size_t>(agent)];
  return full_mask(num_actions);
}

// --- ensemble -------------------------------------------------------------

EnsembleWorldModel::EnsembleWorldModel(DecPomdpShape shape, std::vector<EmpiricalModel> members,
                                       ObservationModel observations, AvailabilityModel availability)
    : shape_(std::move(shape)),
      members_(std::move(members)),
      observations_(std::move(observations)),
      availability_(std::move(availability)),
      joint_(std::vector<std::int64_t>(shape_.actions_per_agent.begin(), shape_.actions_per_agent.end())) {
  if (members_.empty()) throw std::invalid_argument("ensemble needs at least one member");
}

ActionMask EnsembleWorldModel::available(StateId s, int agent) const {
  return availability_.lookup(s, agent, shape_.actions_per_agent[static_cast<std::size_t>(agent)]);
}

ModelStep EnsembleWorldModel::sample_step(int member, StateId s, JointActionId a, Rng& rng) const {
  if (member < 0) member = static_cast<int>(rng.uniform_index(members_.size()));
  const EmpiricalModel& model = members_[static_cast<std::size_t>(member)];
  ModelStep out;
  const PairStatistics* st = model.find(s, a);
  if (st == nullptr) {
    out.next_state = s;
    out.observation = observations_.lookup(s, a, shape_.num_agents);
    out.terminated = true;
    return out;
  }
  out.seen = true;
  out.next_state = model.sample_successor(*st, rng);
  out.reward = st->reward_mean();
  out.terminated = rng.bernoulli(st->termination_probability());
  out.observation = observations_.lookup(out.next_state, a, shape_.num_agents);
  return out;
}

double EnsembleWorldModel::uncertainty_bonus(StateId s, JointActionId a) const {
  const auto m = static_cast<double>(members_.size());
  if (members_.size() < 2) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) spdlog::warn("uncertainty bonus needs at least two ensemble members; using 0");
    return 0.0;
  }
  const auto num_states = static_cast<double>(shape_.num_states);
  // Dynamics: sum_d Var_k p_k[d] = mean_k |p_k|^2 - |mean_k p_k|^2, with the
  // unseen members' uniform vector handled analytically off the union support.
  std::map<StateId, double> seen_mass;  // sum over seen members of p_k[d]
  double mean_sq_norm = 0.0;
  double unseen = 0.0;
  double r_sum = 0.0, r_sq = 0.0, t_sum = 0.0, t_sq = 0.0;
  for (const auto& model : members_) {
    const PairStatistics* st = model.find(s, a);
    double r = 0.0;
    double t = 0.5;
    if (st == nullptr) {
      unseen += 1.0;
      mean_sq_norm += 1.0 / num_states;
    } else {
      const auto c = static_cast<double>(st->count);
      for (const auto& [next, k] : st->successors) {
        const double p = static_cast<double>(k) / c;
        seen_mass[next] += p;
        mean_sq_norm += p * p;
      }
      r = st->reward_mean();
      t = st->termination_probability();
    }
    r_sum += r;
    r_sq += r * r;
    t_sum += t;
    t_sq += t * t;
  }
  if (unseen == m) return kUnvisitedPairBonus;
  mean_sq_norm /= m;
  const double uniform_share = unseen / (m * num_states);
  double centroid_sq = 0.0;
  for (const auto& [next, mass] : seen_mass) {
    const double p = mass / m + uniform_share;
    centroid_sq += p * p;
  }
  centroid_sq += (num_states - static_cast<double>(seen_mass.size())) * uniform_share * uniform_share;
  const double dynamics = std::max(0.0, mean_sq_norm - centroid_sq);
  const double reward = std::max(0.0, r_sq / m - (r_sum / m) * (r_sum / m));
  const double termination = std::max(0.0, t_sq / m - (t_sum / m) * (t_sum / m));
  return dynamics + reward + termination;
}

std::string EnsembleWorldModel::serialize() const {
  std::ostringstream out;
  out << "ensemble 1\n";
  out << "agents " << shape_.num_agents << "\nstates " << shape_.num_states << "\nactions";
  for (int a : shape_.actions_per_agent) out << ' ' << a;
  out << "\nobservations";
  for (ObsId z : shape_.obs_per_agent) out << ' ' << z;
  out << "\ngamma " << number(shape_.gamma) << "\nhorizon " << shape_.horizon << "\n";
  out << "members " << members_.size() << "\n";
  for (const auto& model : members_) {
    out << "member " << model.num_pairs() << "\n";
    std::vector<PairKey> keys;
    for (const auto& [k, v] : model.pairs()) keys.push_back(k);
    for (const auto& k : sorted_pairs(std::move(keys))) {
      const PairStatistics& st = *model.find(k.state, k.action);
      out << "pair " << k.state << ' ' << k.action << " count " << st.count << " reward_sum " << number(st.reward_sum)
          << " terminations " << st.terminations << " next " << st.successors.size();
      for (const auto& [next, c] : st.successors) out << ' ' << next << ' ' << c;
      out << "\n";
    }
  }
  std::vector<PairKey> obs_keys;
  for (const auto& [k, v] : observations_.table()) obs_keys.push_back(k);
  out << "observe_entries " << obs_keys.size() << "\n";
  for (const auto& k : sorted_pairs(std::move(obs_keys))) {
    out << "observe " << k.state << ' ' << k.action;
    for (ObsId o : *observations_.find(k.state, k.action)) out << ' ' << o;
    out << "\n";
  }
  auto states = sorted_keys(availability_.table());
  std::sort(states.begin(), states.end());
  out << "available_entries " << states.size() << "\n";
  for (StateId s : states) {
    out << "available " << s;
    for (ActionMask mask : *availability_.find(s)) out << ' ' << mask;
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

EnsembleWorldModel EnsembleWorldModel::parse(const std::string& text) {
  std::istringstream in(text);
  expect(in, "ensemble");
  if (read<int>(in, "version") != 1) throw std::invalid_argument("unsupported ensemble format version");
  DecPomdpShape shape;
  expect(in, "agents");
  shape.num_agents = read<int>(in, "agents");
  if (shape.num_agents < 1 || shape.num_agents > 64) throw std::invalid_argument("bad agent count");
  expect(in, "states");
  shape.num_states = read<StateId>(in, "states");
  expect(in, "actions");
  for (int j = 0; j < shape.num_agents; ++j) shape.actions_per_agent.push_back(read<int>(in, "actions"));
  expect(in, "observations");
  for (int j = 0; j < shape.num_agents; ++j) shape.obs_per_agent.push_back(read<ObsId>(in, "observations"));
  expect(in, "gamma");
  shape.gamma = parse_number(read<std::string>(in, "gamma"));
  expect(in, "horizon");
  shape.horizon = read<int>(in, "horizon");
  expect(in, "members");
  const auto num_members = read<std::size_t>(in, "members");
  std::vector<EmpiricalModel> members(num_members);
  for (auto& model : members) {
    expect(in, "member");
    const auto pairs = read<std::size_t>(in, "pairs");
    for (std::size_t i = 0; i < pairs; ++i) {
      expect(in, "pair");
      const auto s = read<StateId>(in, "state");
      const auto a = read<JointActionId>(in, "action");
      expect(in, "count");
      const auto count = read<std::int64_t>(in, "count");
      expect(in, "reward_sum");
      const double reward_sum = parse_number(read<std::string>(in, "reward sum"));
      expect(in, "terminations");
      const auto terminations = read<std::int64_t>(in, "terminations");
      expect(in, "next");
      const auto k = read<std::size_t>(in, "successors");
      std::vector<std::pair<StateId, std::int64_t>> successors;
      std::int64_t total = 0;
      for (std::size_t e = 0; e < k; ++e) {
        const auto next = read<StateId>(in, "successor");
        const auto c = read<std::int64_t>(in, "successor count");
        successors.emplace_back(next, c);
        total += c;
      }
      if (total != count || terminations > count) throw std::invalid_argument("inconsistent pair counts");
      model.set(s, a, {std::move(successors), count, reward_sum, terminations});
    }
  }
  ObservationModel observations;
  expect(in, "observe_entries");
  const auto num_obs = read<std::size_t>(in, "observation entries");
  for (std::size_t i = 0; i < num_obs; ++i) {
    expect(in, "observe");
    const auto s = read<StateId>(in, "state");
    const auto prev = read<JointActionId>(in, "previous action");
    std::vector<ObsId> o(static_cast<std::size_t>(shape.num_agents));
    for (auto& x : o) x = read<ObsId>(in, "observation");
    observations.record(s, prev, o);
  }
  AvailabilityModel availability;
  expect(in, "available_entries");
  const auto num_avail = read<std::size_t>(in, "availability entries");
  for (std::size_t i = 0; i < num_avail; ++i) {
    expect(in, "available");
    const auto s = read<StateId>(in, "state");
    std::vector<ActionMask> masks(static_cast<std::size_t>(shape.num_agents));
    for (auto& x : masks) x = read<ActionMask>(in, "mask");
    availability.record(s, masks);
  }
  expect(in, "end");
  return EnsembleWorldModel(std::move(shape), std::move(members), std::move(observations), std::move(availability));
}

bool EnsembleWorldModel::operator==(const EnsembleWorldModel& other) const {
  if (!(shape_ == other.shape_) || members_.size() != other.members_.size()) return false;
  for (std::size_t k = 0; k < members_.size(); ++k) {
    if (!(members_[k] == other.members_[k])) return false;
  }
  return observations_.table() == other.observations_.table() && availability_.table() == other.availability_.table();
}

EnsembleWorldModel fit_ensemble(const Dataset& dataset, const DecPomdpShape& shape, const FitOptions& options,
                                Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("fit_ensemble: dataset is empty");
  if (options.members < 1) throw std::invalid_argument("fit_ensemble: need at least one member");
  ObservationModel observations;
  AvailabilityModel availability;
  for (const auto& t : dataset.records()) {
    observations.record(t.state, t.previous_joint_action, t.observation);
    observations.record(t.next_state, t.joint_action, t.next_observation);
    availability.record(t.state, t.available);
  }
  std::vector<EmpiricalModel> members(static_cast<std::size_t>(options.members));
  const std::size_t n = dataset.size();
  for (std::size_t k = 0; k < members.size(); ++k) {
    EmpiricalModel& model = members[k];
    if (!options.bootstrap) {
      for (const auto& t : dataset.records()) model.add(t.state, t.joint_action, t.reward, t.next_state, t.terminated);
      continue;
    }
    Rng member_rng = rng.fork(k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const Transition& t = dataset[member_rng.uniform_index(n)];
      model.add(t.state, t.joint_action, t.reward, t.next_state, t.terminated);
    }
  }
  return EnsembleWorldModel(shape, std::move(members), std::move(observations), std::move(availability));
}

ModelError model_error(const EmpiricalModel& model, const TabularDecPomdp& env, const std::vector<PairKey>& restriction) {
  ModelError err;
  std::vector<Successor> truth;
  for (const auto& k : restriction) {
    const PairStatistics* st = model.find(k.state, k.action);
    if (st == nullptr) {
      std::ostringstream msg;
      msg << "model_error: pair (" << k.state << ", " << k.action << ") was never observed";
      throw std::invalid_argument(msg.str());
    }
    env.successors(k.state, k.action, truth);
    double l1 = 0.0;
    std::size_t i = 0;
    for (const auto& e : truth) {
      while (i < st->successors.size() && st->successors[i].first < e.state) {
        l1 += st->probability(st->successors[i].first);
        ++i;
      }
      double p_hat = 0.0;
      if (i < st->successors.size() && st->successors[i].first == e.state) {
        p_hat = st->probability(e.state);
        ++i;
      }
      l1 += std::abs(e.probability - p_hat);
    }
    for (; i < st->successors.size(); ++i) l1 += st->probability(st->successors[i].first);
    err.max_l1_dynamics = std::max(err.max_l1_dynamics, l1);
    err.max_abs_reward = std::max(err.max_abs_reward, std::abs(env.reward(k.state, k.action).mean - st->reward_mean()));
  }
  return err;
}

}  // namespace decmarl
