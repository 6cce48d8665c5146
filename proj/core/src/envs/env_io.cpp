#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "decmarl/envs.hpp"

namespace decmarl {

namespace {

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  void expect(const std::string& keyword) {
    std::string word;
    if (!(in_ >> word) || word != keyword) {
      throw std::invalid_argument("load_tables: expected '" + keyword + "', found '" + word + "'");
    }
  }
  template <typename T>
  T read() {
    T value{};
    if (!(in_ >> value)) throw std::invalid_argument("load_tables: truncated or malformed input");
    return value;
  }
  double read_double() {
    std::string word = read<std::string>();
    try {
      std::size_t used = 0;
      const double v = std::stod(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("load_tables: bad number '" + word + "'");
    }
  }

 private:
  std::istringstream in_;
};

}  // namespace

std::string save_tables(const DecPomdpTables& t) {
  validate_tables(t);
  std::ostringstream out;
  const auto n = static_cast<std::size_t>(t.shape.num_agents);
  out << "decpomdp 1\n";
  out << "name " << t.name << "\n";
  out << "agents " << t.shape.num_agents << "\n";
  out << "states " << t.shape.num_states << "\n";
  out << "actions";
  for (int a : t.shape.actions_per_agent) out << ' ' << a;
  out << "\nobservations";
  for (ObsId z : t.shape.obs_per_agent) out << ' ' << z;
  out << "\ngamma " << number(t.shape.gamma) << "\n";
  out << "horizon " << t.shape.horizon << "\n";
  out << "reward_bounds " << number(t.reward_bounds.min) << ' ' << number(t.reward_bounds.max) << "\n";
  out << "initial";
  for (double p : t.initial) out << ' ' << number(p);
  out << "\n";
  const std::size_t num_actions = t.transitions.size() / static_cast<std::size_t>(t.shape.num_states);
  for (std::size_t i = 0; i < t.transitions.size(); ++i) {
    out << "pair " << i / num_actions << ' ' << i % num_actions << " reward " << number(t.rewards[i].mean) << ' '
        << number(t.rewards[i].noise) << " terminate " << number(t.terminations[i]) << " next "
        << t.transitions[i].size();
    for (const auto& e : t.transitions[i]) out << ' ' << e.state << ' ' << number(e.probability);
    out << "\n";
  }
  const std::size_t rows = t.observations.size() / n;
  for (std::size_t row = 0; row < rows; ++row) {
    out << "observe " << row / (num_actions + 1) << ' ' << static_cast<std::int64_t>(row % (num_actions + 1)) - 1;
    for (std::size_t j = 0; j < n; ++j) out << ' ' << t.observations[row * n + j];
    out << "\n";
  }
  for (StateId s = 0; s < t.shape.num_states; ++s) {
    out << "available " << s;
    for (std::size_t j = 0; j < n; ++j) out << ' ' << t.availability[static_cast<std::size_t>(s) * n + j];
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

DecPomdpTables load_tables(const std::string& text) {
  Reader in(text);
  in.expect("decpomdp");
  if (in.read<int>() != 1) throw std::invalid_argument("load_tables: unsupported format version");
  in.expect("name");
  const std::string name = in.read<std::string>();
  DecPomdpShape shape;
  in.expect("agents");
  shape.num_agents = in.read<int>();
  in.expect("states");
  shape.num_states = in.read<StateId>();
  if (shape.num_agents < 1 || shape.num_agents > 64) throw std::invalid_argument("load_tables: bad agent count");
  in.expect("actions");
  for (int j = 0; j < shape.num_agents; ++j) shape.actions_per_agent.push_back(in.read<int>());
  in.expect("observations");
  for (int j = 0; j < shape.num_agents; ++j) shape.obs_per_agent.push_back(in.read<ObsId>());
  in.expect("gamma");
  shape.gamma = in.read_double();
  in.expect("horizon");
  shape.horizon = in.read<int>();
  DecPomdpTables t = DecPomdpTables::allocate(name, shape);
  in.expect("reward_bounds");
  t.reward_bounds.min = in.read_double();
  t.reward_bounds.max = in.read_double();
  in.expect("initial");
  for (auto& p : t.initial) p = in.read_double();
  const std::size_t num_actions = t.transitions.size() / static_cast<std::size_t>(shape.num_states);
  for (std::size_t i = 0; i < t.transitions.size(); ++i) {
    in.expect("pair");
    if (in.read<std::size_t>() != i / num_actions || in.read<std::size_t>() != i % num_actions) {
      throw std::invalid_argument("load_tables: pairs out of order");
    }
    in.expect("reward");
    t.rewards[i].mean = in.read_double();
    t.rewards[i].noise = in.read_double();
    in.expect("terminate");
    t.terminations[i] = in.read_double();
    in.expect("next");
    const auto k = in.read<std::size_t>();
    if (k > static_cast<std::size_t>(shape.num_states)) throw std::invalid_argument("load_tables: row too long");
    t.transitions[i].resize(k);
    for (auto& e : t.transitions[i]) {
      e.state = in.read<StateId>();
      e.probability = in.read_double();
    }
  }
  const auto n = static_cast<std::size_t>(shape.num_agents);
  const std::size_t rows = t.observations.size() / n;
  for (std::size_t row = 0; row < rows; ++row) {
    in.expect("observe");
    const auto s = in.read<std::size_t>();
    const auto prev = in.read<std::int64_t>();
    if (s != row / (num_actions + 1) || prev != static_cast<std::int64_t>(row % (num_actions + 1)) - 1) {
      throw std::invalid_argument("load_tables: observations out of order");
    }
    for (std::size_t j = 0; j < n; ++j) t.observations[row * n + j] = in.read<ObsId>();
  }
  for (StateId s = 0; s < shape.num_states; ++s) {
    in.expect("available");
    if (in.read<StateId>() != s) throw std::invalid_argument("load_tables: availability out of order");
    for (std::size_t j = 0; j < n; ++j) t.availability[static_cast<std::size_t>(s) * n + j] = in.read<ActionMask>();
  }
  in.expect("end");
  validate_tables(t);
  return t;
}

void save_tables_file(const DecPomdpTables& tables, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << save_tables(tables);
}

DecPomdpTables load_tables_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_tables(buf.str());
}

}  // namespace decmarl
