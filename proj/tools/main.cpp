#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "decmarl/harness.hpp"
#include "decmarl/theory_check.hpp"

namespace {

int verify(std::int64_t trials, std::uint64_t seed, int workers, const std::string& out) {
  decmarl::CampaignConfig config = decmarl::CampaignConfig::with_trials(trials);
  config.seed = seed;
  config.workers = workers;
  const decmarl::CampaignResult result = decmarl::run_campaign(config);
  for (const auto& r : result.reports) {
    std::printf("%-20s trials=%lld violations=%lld max_slack=%.3g\n", r.name().c_str(),
                static_cast<long long>(r.trials()), static_cast<long long>(r.violations()), r.max_slack());
  }
  const auto& c = result.coverage;
  std::printf("%-20s trials=%zu failures=%lld fraction=%.4f threshold=%.4f\n", "model_error_coverage", c.trials.size(),
              static_cast<long long>(c.failures), c.failure_fraction, c.threshold);
  const auto& e = result.escape_spot_check;
  std::printf("%-20s checks=%lld outside_3se=%lld (informational)\n", e.name().c_str(),
              static_cast<long long>(e.trials()), static_cast<long long>(e.violations()));
  if (!out.empty()) decmarl::write_campaign(result, decmarl::resolve_output_dir(out));
  std::printf("%s\n", result.passed() ? "PASS" : "FAIL");
  return result.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular Dec-POMDP workbench"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "run every seed of an experiment config");
  train->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);

  std::int64_t trials = 1000;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string verify_out;
  auto* check = app.add_subcommand("verify", "randomized checks of the theory bounds");
  check->add_option("--trials", trials, "instances for the per-policy checks; others scale")->check(CLI::PositiveNumber);
  check->add_option("--seed", seed, "campaign seed");
  check->add_option("--workers", workers, "threads, 0 for all cores");
  check->add_option("--out", verify_out, "directory for per-trial CSVs");

  std::string pattern;
  std::string report_out;
  auto* report = app.add_subcommand("report", "aggregate learning curves");
  report->add_option("--glob", pattern, "curve files, e.g. 'runs/seed_*/learning_curve.csv'")->required();
  report->add_option("--out", report_out, "aggregate CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return decmarl::run_experiment(config_path);
    if (*check) return verify(trials, seed, workers, verify_out);
    if (*report) {
      const auto files = decmarl::expand_glob(pattern);
      if (files.empty()) {
        spdlog::error("no files match {}", pattern);
        return 2;
      }
      decmarl::aggregate_runs(files, report_out);
      std::printf("aggregated %zu curves into %s\n", files.size(), report_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
