#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "decmarl/envs.hpp"
#include "decmarl/marco.hpp"
#include "decmarl/rmax.hpp"
#include "decmarl/theory_check.hpp"

namespace decmarl {

// Flat key=value text. '#' starts a comment line; keys may be dotted.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string& text);
ConfigMap load_config(const std::string& path);
std::string format_config(const ConfigMap& config);

enum class Algorithm { kMarco, kIql, kVdn, kRmax, kVerify };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm algorithm);

struct EnvConfig {
  std::string id = "switch";  // switch, switch_bridge, grid_ref, tiny, random, file
  int num_agents = 3;
  int horizon = 0;  // 0 keeps the env's own default
  int bridge_length = 3;
  int grid_size = 5;
  int num_messages = 10;
  std::string path;
  std::uint64_t seed = 0;
  RandomDecPomdpSpec random;
  bool normalize = false;
};

EnvPtr make_env(const EnvConfig& config);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kMarco;
  EnvConfig env;
  MarcoConfig marco;
  BaselineConfig baseline;
  RmaxConfig rmax;
  std::int64_t verify_trials = 1000;
  std::vector<std::uint64_t> seeds;
  std::string output = "runs";
  int workers = 0;
  ConfigMap source;
};

// Strict: unknown keys and malformed values throw std::invalid_argument.
ExperimentConfig parse_experiment(const ConfigMap& config);

// DECMARL_OUT, when set, is the root for relative output directories.
std::string resolve_output_dir(const std::string& output);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
};

std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config);

// Returns the process exit code: nonzero for a bad config or any failed seed.
int run_experiment(const std::string& config_path);

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

// Reads env_samples and test_return_mean columns by header name.
Curve read_curve(const std::string& path);

// Value at x by linear interpolation, constant beyond the end points.
double interpolate(const Curve& curve, double x);

struct AggregateRow {
  double x = 0.0;
  double mean = 0.0;
  double se = 0.0;
};

// Union of all x values; population standard deviation over sqrt(n).
std::vector<AggregateRow> aggregate_curves(const std::vector<Curve>& curves);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
void aggregate_runs(const std::vector<std::string>& paths, const std::string& out_path);

std::vector<std::string> expand_glob(const std::string& pattern);

}  // namespace decmarl
