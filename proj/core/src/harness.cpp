#include "decmarl/harness.hpp"

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/version.hpp>
#include <spdlog/spdlog.h>

#include "decmarl/parallel.hpp"

namespace decmarl {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Pulls typed values out of the map and remembers which keys were used.
class Reader {
 public:
  explicit Reader(const ConfigMap& map) : map_(map) {}

  bool has(const std::string& key) const { return map_.count(key) > 0; }

  std::string text(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    const auto it = map_.find(key);
    return it == map_.end() ? fallback : it->second;
  }

  template <typename T>
  T number(const std::string& key, T fallback) {
    used_.insert(key);
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    return parse<T>(key, it->second);
  }

  bool flag(const std::string& key, bool fallback) {
    used_.insert(key);
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("invalid value for " + key + ": " + it->second);
  }

  void finish() const {
    for (const auto& [key, value] : map_) {
      if (!used_.count(key)) throw std::invalid_argument("unknown config key: " + key);
    }
  }

  template <typename T>
  static T parse(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("invalid value for " + key + ": " + value);
    return out;
  }

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

void read_learner(Reader& r, const std::string& prefix, LearnerConfig& c, bool with_kind = true) {
  if (with_kind && r.has(prefix + ".kind")) c.kind = parse_learner_kind(r.text(prefix + ".kind", ""));
  c.alpha = r.number(prefix + ".alpha", c.alpha);
  c.target_sync = r.number(prefix + ".target_sync", c.target_sync);
  c.epsilon.start = r.number(prefix + ".epsilon_start", c.epsilon.start);
  c.epsilon.end = r.number(prefix + ".epsilon_end", c.epsilon.end);
  c.epsilon.anneal_steps = r.number(prefix + ".epsilon_anneal_steps", c.epsilon.anneal_steps);
  c.epsilon.constant = r.flag(prefix + ".epsilon_constant", c.epsilon.constant);
  c.replay_episodes = r.number(prefix + ".replay_episodes", c.replay_episodes);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash != std::string::npos) {
      const auto lo = Reader::parse<std::uint64_t>("seeds", trim(item.substr(0, dash)));
      const auto hi = Reader::parse<std::uint64_t>("seeds", trim(item.substr(dash + 1)));
      if (hi < lo) throw std::invalid_argument("invalid seed range: " + item);
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(Reader::parse<std::uint64_t>("seeds", item));
    }
  }
  return seeds;
}

std::string version_block(const ExperimentConfig& config) {
  std::ostringstream out;
  out << "# decmarl " << DECMARL_VERSION << "\n";
  out << "# compiler " << __VERSION__ << "\n";
  out << "# boost " << BOOST_VERSION / 100000 << "." << BOOST_VERSION / 100 % 1000 << "." << BOOST_VERSION % 100 << "\n";
  out << "# algorithm " << algorithm_name(config.algorithm) << "\n";
  return out.str();
}

// Writes one seed's outputs into `dir`. Throws on failure.
void run_seed(const ExperimentConfig& config, const TabularDecPomdp& env, std::uint64_t seed,
              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  switch (config.algorithm) {
    case Algorithm::kMarco: {
      const MarcoResult result = marco_train(env, config.marco, seed);
      std::string curve = metrics_header() + "\n";
      for (const auto& row : result.metrics) curve += metrics_line(row) + "\n";
      write_file(dir / "learning_curve.csv", curve);
      std::string coverage = coverage_header() + "\n";
      for (const auto& rec : result.coverage) coverage += coverage_line(rec) + "\n";
      write_file(dir / "coverage.csv", coverage);
      break;
    }
    case Algorithm::kIql:
    case Algorithm::kVdn: {
      BaselineConfig baseline = config.baseline;
      baseline.learner.kind = config.algorithm == Algorithm::kIql ? LearnerKind::kIql : LearnerKind::kVdn;
      const BaselineResult result = run_baseline(env, baseline, seed);
      std::string curve = metrics_header() + "\n";
      for (const auto& row : result.metrics) curve += metrics_line(row) + "\n";
      write_file(dir / "learning_curve.csv", curve);
      break;
    }
    case Algorithm::kRmax: {
      const RmaxResult result = rmax_run(env, config.rmax, seed);
      std::string curve = rmax_header() + "\n";
      for (const auto& row : result.episodes) curve += rmax_line(row) + "\n";
      write_file(dir / "learning_curve.csv", curve);
      break;
    }
    case Algorithm::kVerify: {
      CampaignConfig campaign = CampaignConfig::with_trials(config.verify_trials);
      campaign.seed = seed;
      campaign.workers = 1;
      const CampaignResult result = run_campaign(campaign);
      write_campaign(result, dir.string());
      if (!result.passed()) {
        throw std::runtime_error("theory checks failed: " + std::to_string(result.violations()) + " violations, " +
                                 std::to_string(result.coverage.failures) + " coverage failures");
      }
      break;
    }
  }
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap map;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(number) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(number) + ": empty key");
    if (!map.emplace(key, trim(line.substr(eq + 1))).second) throw std::invalid_argument("duplicate config key: " + key);
  }
  return map;
}

ConfigMap load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [key, value] : config) out += key + "=" + value + "\n";
  return out;
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "marco") return Algorithm::kMarco;
  if (name == "iql") return Algorithm::kIql;
  if (name == "vdn") return Algorithm::kVdn;
  if (name == "rmax") return Algorithm::kRmax;
  if (name == "verify") return Algorithm::kVerify;
  throw std::invalid_argument("unknown algorithm: " + name);
}

std::string algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kMarco: return "marco";
    case Algorithm::kIql: return "iql";
    case Algorithm::kVdn: return "vdn";
    case Algorithm::kRmax: return "rmax";
    case Algorithm::kVerify: return "verify";
  }
  return "?";
}

EnvPtr make_env(const EnvConfig& c) {
  EnvPtr env;
  if (c.id == "switch") {
    SwitchOptions options;
    options.num_agents = c.num_agents;
    if (c.horizon > 0) options.horizon = c.horizon;
    env = make_switch(options);
  } else if (c.id == "switch_bridge") {
    env = make_switch_bridge(c.num_agents, c.horizon > 0 ? c.horizon : 9, c.bridge_length);
  } else if (c.id == "grid_ref") {
    GridReferenceOptions options;
    options.grid_size = c.grid_size;
    options.num_messages = c.num_messages;
    if (c.horizon > 0) options.horizon = c.horizon;
    env = make_grid_reference(options);
  } else if (c.id == "tiny" || c.id == "random") {
    RandomDecPomdpSpec spec = c.id == "tiny" ? canonical_tiny_spec() : c.random;
    if (c.horizon > 0) spec.horizon = c.horizon;
    Rng rng = Rng(c.seed).fork(streams::kInstances);
    env = make_random_decpomdp(spec, rng);
  } else if (c.id == "file") {
    if (c.path.empty()) throw std::invalid_argument("env.path is required for env=file");
    env = std::make_shared<ExplicitDecPomdp>(load_tables_file(c.path));
  } else {
    throw std::invalid_argument("unknown env: " + c.id);
  }
  if (c.normalize) env = normalize_rewards(env);
  return env;
}

ExperimentConfig parse_experiment(const ConfigMap& config) {
  ExperimentConfig out;
  out.source = config;
  Reader r(config);
  out.algorithm = parse_algorithm(r.text("algorithm", "marco"));
  out.seeds = parse_seeds(r.text("seeds", ""));
  if (out.seeds.empty()) throw std::invalid_argument("no seeds");
  out.output = r.text("output", out.output);
  out.workers = r.number("workers", out.workers);

  EnvConfig& env = out.env;
  env.id = r.text("env", env.id);
  env.num_agents = r.number("env.num_agents", env.num_agents);
  env.horizon = r.number("env.horizon", env.horizon);
  env.bridge_length = r.number("env.bridge_length", env.bridge_length);
  env.grid_size = r.number("env.grid_size", env.grid_size);
  env.num_messages = r.number("env.num_messages", env.num_messages);
  env.path = r.text("env.path", env.path);
  env.seed = r.number("env.seed", env.seed);
  env.normalize = r.flag("env.normalize", out.algorithm == Algorithm::kRmax && env.id == "file");
  RandomDecPomdpSpec& spec = env.random;
  spec.num_states = r.number("env.num_states", spec.num_states);
  const int actions = r.number("env.num_actions", spec.actions_per_agent.front());
  const int observations = r.number("env.num_observations", static_cast<int>(spec.obs_per_agent.front()));
  const int random_agents = r.number("env.random_agents", spec.num_agents);
  spec.num_agents = random_agents;
  spec.actions_per_agent.assign(static_cast<std::size_t>(random_agents), actions);
  spec.obs_per_agent.assign(static_cast<std::size_t>(random_agents), observations);
  spec.gamma = r.number("env.gamma", spec.gamma);
  spec.termination_rate = r.number("env.termination_rate", spec.termination_rate);
  spec.reward_noise = r.number("env.reward_noise", spec.reward_noise);
  spec.blank_initial_observation = r.flag("env.blank_initial_observation", spec.blank_initial_observation);

  out.marco = marco_defaults(env.id);
  MarcoConfig& m = out.marco;
  m.ensemble_size = r.number("marco.ensemble_size", m.ensemble_size);
  m.bootstrap = r.flag("marco.bootstrap", m.bootstrap);
  m.lambda = r.number("marco.lambda", m.lambda);
  m.init_random_samples = r.number("marco.init_random_samples", m.init_random_samples);
  m.samples_per_round = r.number("marco.samples_per_round", m.samples_per_round);
  m.model_train_steps_per_round = r.number("marco.model_train_steps_per_round", m.model_train_steps_per_round);
  m.explore_train_steps_per_round = r.number("marco.explore_train_steps_per_round", m.explore_train_steps_per_round);
  m.env_sample_cap = r.number("marco.env_sample_cap", m.env_sample_cap);
  m.collection_epsilon = r.number("marco.collection_epsilon", m.collection_epsilon);
  m.gamma = r.number("marco.gamma", m.gamma);
  m.use_exploration_policy = r.flag("marco.use_exploration_policy", m.use_exploration_policy);
  m.eval_episodes = r.number("marco.eval_episodes", m.eval_episodes);
  m.eval_interval = r.number("marco.eval_interval", m.eval_interval);
  read_learner(r, "learner", m.learner);
  // The explorer is always VDN; explorer.kind stays unconsumed and is reported as unknown.
  read_learner(r, "explorer", m.explorer, false);

  BaselineConfig& b = out.baseline;
  b.learner = m.learner;
  b.total_samples = r.number("baseline.total_samples", b.total_samples);
  b.eval_every = r.number("baseline.eval_every", b.eval_every);
  b.eval_episodes = r.number("baseline.eval_episodes", b.eval_episodes);
  b.gamma = r.number("baseline.gamma", b.gamma);

  RmaxConfig& x = out.rmax;
  x.m = r.number("rmax.m", x.m);
  x.max_episodes = r.number("rmax.max_episodes", x.max_episodes);
  x.plan.mode = parse_plan_mode(r.text("rmax.plan_mode", "auto"));
  x.plan.exact_limit = r.number("rmax.exact_limit", x.plan.exact_limit);
  x.plan.rollouts = r.number("rmax.rollouts", x.plan.rollouts);

  out.verify_trials = r.number("verify.trials", out.verify_trials);
  r.finish();
  if (out.algorithm == Algorithm::kMarco) validate(out.marco);
  return out;
}

std::string resolve_output_dir(const std::string& output) {
  const char* root = std::getenv("DECMARL_OUT");
  const std::filesystem::path path(output);
  if (root == nullptr || *root == '\0' || path.is_absolute()) return output;
  return (std::filesystem::path(root) / path).string();
}

std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw std::invalid_argument("no seeds");
  const std::filesystem::path root(resolve_output_dir(config.output));
  std::filesystem::create_directories(root);
  const EnvPtr env = config.algorithm == Algorithm::kVerify ? nullptr : make_env(config.env);

  std::vector<SeedOutcome> outcomes(config.seeds.size());
  parallel_for(static_cast<std::int64_t>(config.seeds.size()), config.workers, [&](std::int64_t i) {
    SeedOutcome& outcome = outcomes[static_cast<std::size_t>(i)];
    outcome.seed = config.seeds[static_cast<std::size_t>(i)];
    try {
      run_seed(config, *env, outcome.seed, root / ("seed_" + std::to_string(outcome.seed)));
    } catch (const std::exception& e) {
      outcome.ok = false;
      outcome.error = e.what();
      spdlog::error("seed {} failed: {}", outcome.seed, e.what());
    }
  });

  std::string manifest = version_block(config);
  for (const auto& o : outcomes) {
    manifest += "# seed " + std::to_string(o.seed) + " " + (o.ok ? "ok" : "failed: " + o.error) + "\n";
  }
  manifest += format_config(config.source);
  write_file(root / "manifest.txt", manifest);

  if (config.algorithm != Algorithm::kRmax && config.algorithm != Algorithm::kVerify) {
    std::vector<std::string> curves;
    for (const auto& o : outcomes) {
      if (o.ok) curves.push_back((root / ("seed_" + std::to_string(o.seed)) / "learning_curve.csv").string());
    }
    if (!curves.empty()) aggregate_runs(curves, (root / "aggregate.csv").string());
  }
  return outcomes;
}

int run_experiment(const std::string& config_path) {
  try {
    const ExperimentConfig config = parse_experiment(load_config(config_path));
    const auto outcomes = run_experiment(config);
    return std::all_of(outcomes.begin(), outcomes.end(), [](const SeedOutcome& o) { return o.ok; }) ? 0 : 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}

Curve read_curve(const std::string& path) {
  std::stringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw std::invalid_argument("empty curve file: " + path);
  std::vector<std::string> columns;
  {
    std::stringstream header(trim(line));
    std::string name;
    while (std::getline(header, name, ',')) columns.push_back(name);
  }
  const auto find = [&](const std::string& name) {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::invalid_argument(path + ": missing column " + name);
    return static_cast<std::size_t>(it - columns.begin());
  };
  const std::size_t xi = find("env_samples");
  const std::size_t yi = find("test_return_mean");
  Curve curve;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns.size()) throw std::invalid_argument(path + ": ragged row");
    curve.x.push_back(std::stod(cells[xi]));
    curve.y.push_back(std::stod(cells[yi]));
  }
  if (curve.x.empty()) throw std::invalid_argument("empty curve file: " + path);
  return curve;
}

double interpolate(const Curve& curve, double x) {
  if (curve.x.empty()) throw std::invalid_argument("interpolate: empty curve");
  if (x <= curve.x.front()) return curve.y.front();
  if (x >= curve.x.back()) return curve.y.back();
  const auto it = std::upper_bound(curve.x.begin(), curve.x.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - curve.x.begin());
  const std::size_t lo = hi - 1;
  const double span = curve.x[hi] - curve.x[lo];
  if (span <= 0.0) return curve.y[hi];
  const double w = (x - curve.x[lo]) / span;
  return (1.0 - w) * curve.y[lo] + w * curve.y[hi];
}

std::vector<AggregateRow> aggregate_curves(const std::vector<Curve>& curves) {
  if (curves.empty()) throw std::invalid_argument("aggregate: no curves");
  std::vector<double> grid;
  for (const auto& c : curves) {
    if (c.x.empty()) throw std::invalid_argument("aggregate: empty curve");
    grid.insert(grid.end(), c.x.begin(), c.x.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<AggregateRow> rows;
  const auto n = static_cast<double>(curves.size());
  for (double x : grid) {
    std::vector<double> ys;
    for (const auto& c : curves) ys.push_back(interpolate(c, x));
    std::sort(ys.begin(), ys.end());
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= n;
    double var = 0.0;
    for (double y : ys) var += (y - mean) * (y - mean);
    var /= n;
    rows.push_back({x, mean, std::sqrt(var) / std::sqrt(n)});
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "env_samples,mean,se\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", r.x, r.mean, r.se);
    out += buf;
  }
  return out;
}

void aggregate_runs(const std::vector<std::string>& paths, const std::string& out_path) {
  if (paths.empty()) throw std::invalid_argument("aggregate: no input files");
  std::vector<std::string> sorted = paths;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Curve> curves;
  for (const auto& p : sorted) curves.push_back(read_curve(p));
  write_file(out_path, aggregate_csv(aggregate_curves(curves)));
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t matches{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &matches);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < matches.gl_pathc; ++i) out.emplace_back(matches.gl_pathv[i]);
  }
  globfree(&matches);
  if (rc != 0 && rc != GLOB_NOMATCH) throw std::runtime_error("glob failed: " + pattern);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace decmarl
