#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "decmarl/harness.hpp"

namespace decmarl {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("decmarl_harness_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    unsetenv("DECMARL_OUT");
    fs::remove_all(dir_);
  }
  fs::path dir_;
};

const char* kSmallMarco =
    "# small run\n"
    "algorithm = marco\n"
    "env = switch\n"
    "seeds = 1-2\n"
    "marco.init_random_samples = 200\n"
    "marco.samples_per_round = 200\n"
    "marco.model_train_steps_per_round = 300\n"
    "marco.explore_train_steps_per_round = 300\n"
    "marco.env_sample_cap = 600\n"
    "marco.eval_episodes = 5\n";

TEST(ParseConfig, CommentsWhitespaceAndDuplicates) {
  const ConfigMap c = parse_config("# header\n a = 1 \n\nb.c=two words\n");
  EXPECT_EQ(c.at("a"), "1");
  EXPECT_EQ(c.at("b.c"), "two words");
  EXPECT_EQ(c.size(), 2U);
  EXPECT_THROW(parse_config("a=1\na=2\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("just text\n"), std::invalid_argument);
  EXPECT_EQ(parse_config(format_config(c)), c);
}

TEST(ParseExperiment, SeedsListsAndRanges) {
  ConfigMap c{{"algorithm", "iql"}, {"seeds", "1,3,5-7"}};
  EXPECT_EQ(parse_experiment(c).seeds, (std::vector<std::uint64_t>{1, 3, 5, 6, 7}));
  c["seeds"] = "";
  try {
    parse_experiment(c);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("no seeds"), std::string::npos);
  }
  c.erase("seeds");
  EXPECT_THROW(parse_experiment(c), std::invalid_argument);
}

TEST(ParseExperiment, UnknownKeysAndBadValuesAreRejected) {
  try {
    parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"marco.lamda", "2"}});
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("unknown config key: marco.lamda"), std::string::npos);
  }
  EXPECT_THROW(parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"explorer.kind", "iql"}}),
               std::invalid_argument);
  EXPECT_NO_THROW(parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"explorer.alpha", "0.2"}}));
  try {
    parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"marco.lambda", "lots"}});
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("invalid value for marco.lambda: lots"), std::string::npos);
  }
  EXPECT_THROW(parse_experiment({{"algorithm", "ppo"}, {"seeds", "1"}}), std::invalid_argument);
  EXPECT_THROW(parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"marco.env_sample_cap", "10"}}),
               std::invalid_argument);
}

TEST(ParseExperiment, DefaultsFollowTheEnvironment) {
  const ExperimentConfig bridge = parse_experiment({{"algorithm", "marco"}, {"seeds", "1"}, {"env", "switch_bridge"}});
  EXPECT_EQ(bridge.marco.samples_per_round, 10'000);
  const ExperimentConfig rmax = parse_experiment({{"algorithm", "rmax"}, {"seeds", "1"}, {"env", "file"}, {"env.path", "x"}});
  EXPECT_TRUE(rmax.env.normalize);
  const ExperimentConfig tuned =
      parse_experiment({{"algorithm", "vdn"}, {"seeds", "1"}, {"learner.alpha", "0.3"}, {"baseline.total_samples", "10"}});
  EXPECT_EQ(tuned.baseline.learner.alpha, 0.3);
  EXPECT_EQ(tuned.baseline.learner.kind, LearnerKind::kVdn);
  EXPECT_EQ(tuned.baseline.total_samples, 10);
  EXPECT_EQ(tuned.output, "runs");
}

TEST(MakeEnv, KnownIdsBuild) {
  EnvConfig c;
  c.id = "switch";
  EXPECT_EQ(make_env(c)->num_agents(), 3);
  c.id = "switch_bridge";
  EXPECT_EQ(make_env(c)->horizon(), 9);
  c.id = "tiny";
  EXPECT_EQ(make_env(c)->num_joint_actions(), 4);
  c.id = "grid_ref";
  c.grid_size = 3;
  c.num_messages = 2;
  EXPECT_EQ(make_env(c)->num_agents(), 2);
  c.id = "switch";
  c.normalize = true;
  EXPECT_EQ(make_env(c)->reward_bounds().min, 0.0);
  c.id = "nope";
  EXPECT_THROW(make_env(c), std::invalid_argument);
}

TEST_F(HarnessTest, OutputRootComesFromEnvironment) {
  setenv("DECMARL_OUT", dir_.c_str(), 1);
  EXPECT_EQ(fs::path(resolve_output_dir("runs/a")), dir_ / "runs/a");
  EXPECT_EQ(resolve_output_dir("/abs/path"), "/abs/path");
  unsetenv("DECMARL_OUT");
  EXPECT_EQ(resolve_output_dir("runs/a"), "runs/a");
}

TEST_F(HarnessTest, RerunAndManifestReproduceBytes) {
  setenv("DECMARL_OUT", dir_.c_str(), 1);
  spit(dir_ / "small.cfg", std::string(kSmallMarco) + "output = first\n");
  ASSERT_EQ(run_experiment((dir_ / "small.cfg").string()), 0);
  spit(dir_ / "again.cfg", std::string(kSmallMarco) + "output = second\n");
  ASSERT_EQ(run_experiment((dir_ / "again.cfg").string()), 0);
  for (const char* file : {"seed_1/learning_curve.csv", "seed_2/learning_curve.csv", "seed_1/coverage.csv",
                           "aggregate.csv"}) {
    const std::string a = slurp(dir_ / "first" / file);
    EXPECT_FALSE(a.empty()) << file;
    EXPECT_EQ(a, slurp(dir_ / "second" / file)) << file;
  }
  const std::string manifest = slurp(dir_ / "first/manifest.txt");
  EXPECT_NE(manifest.find("# seed 1 ok"), std::string::npos);
  EXPECT_NE(manifest.find("# algorithm marco"), std::string::npos);
  ConfigMap echoed = parse_config(manifest);
  echoed["output"] = "third";
  spit(dir_ / "third.cfg", format_config(echoed));
  ASSERT_EQ(run_experiment((dir_ / "third.cfg").string()), 0);
  EXPECT_EQ(slurp(dir_ / "first/seed_2/learning_curve.csv"), slurp(dir_ / "third/seed_2/learning_curve.csv"));
}

TEST_F(HarnessTest, FailedSeedIsRecorded) {
  spit(dir_ / "bad.cfg", "algorithm = rmax\nenv = switch\nenv.normalize = false\nseeds = 4\noutput = " +
                             (dir_ / "bad").string() + "\n");
  EXPECT_EQ(run_experiment((dir_ / "bad.cfg").string()), 1);
  const std::string manifest = slurp(dir_ / "bad/manifest.txt");
  EXPECT_NE(manifest.find("# seed 4 failed: "), std::string::npos);
  EXPECT_NE(manifest.find("bounded rewards"), std::string::npos);
  spit(dir_ / "broken.cfg", "algorithm = marco\nseeds = 1\nbogus = 1\n");
  EXPECT_EQ(run_experiment((dir_ / "broken.cfg").string()), 2);
}

TEST_F(HarnessTest, RmaxAndBaselineRunsWriteCurves) {
  spit(dir_ / "r.cfg", "algorithm = rmax\nenv = tiny\nseeds = 1\nrmax.m = 3\nrmax.max_episodes = 20\noutput = " +
                           (dir_ / "r").string() + "\n");
  ASSERT_EQ(run_experiment((dir_ / "r.cfg").string()), 0);
  const std::string curve = slurp(dir_ / "r/seed_1/learning_curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "episode,env_steps_cumulative,known_pairs,return,replanned");
  spit(dir_ / "b.cfg", "algorithm = iql\nenv = switch\nseeds = 1,2\nbaseline.total_samples = 300\n"
                       "baseline.eval_every = 100\nbaseline.eval_episodes = 3\noutput = " +
                           (dir_ / "b").string() + "\n");
  ASSERT_EQ(run_experiment((dir_ / "b.cfg").string()), 0);
  const Curve c = read_curve((dir_ / "b/seed_1/learning_curve.csv").string());
  EXPECT_EQ(c.x, (std::vector<double>{0, 100, 200, 300}));
  EXPECT_TRUE(fs::exists(dir_ / "b/aggregate.csv"));
}

TEST(Interpolate, LinearInsideFlatOutside) {
  const Curve c{{0, 10, 20}, {0, 1, 3}};
  EXPECT_DOUBLE_EQ(interpolate(c, 5), 0.5);
  EXPECT_DOUBLE_EQ(interpolate(c, 15), 2.0);
  EXPECT_DOUBLE_EQ(interpolate(c, -3), 0.0);
  EXPECT_DOUBLE_EQ(interpolate(c, 30), 3.0);
  EXPECT_DOUBLE_EQ(interpolate(c, 10), 1.0);
}

TEST(AggregateCurves, SingleRunHasZeroError) {
  const std::vector<AggregateRow> rows = aggregate_curves({Curve{{0, 5}, {0.2, 0.4}}});
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_EQ(rows[1].mean, 0.4);
  EXPECT_EQ(rows[0].se, 0.0);
  EXPECT_EQ(rows[1].se, 0.0);
}

TEST(AggregateCurves, TwoConstantCurves) {
  const std::vector<AggregateRow> rows = aggregate_curves({Curve{{0, 10}, {0, 0}}, Curve{{0, 10}, {1, 1}}});
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.mean, 0.5);
    EXPECT_NEAR(r.se, 0.3536, 1e-4);
    EXPECT_DOUBLE_EQ(r.se, 0.5 / std::sqrt(2.0));
  }
}

TEST(AggregateCurves, UnionGridAndPermutationInvariance) {
  const Curve a{{0, 10, 20}, {0.0, 0.5, 1.0}};
  const Curve b{{0, 15}, {0.2, 0.8}};
  const Curve c{{5, 25}, {0.1, 0.3}};
  const std::string abc = aggregate_csv(aggregate_curves({a, b, c}));
  EXPECT_EQ(abc, aggregate_csv(aggregate_curves({c, a, b})));
  EXPECT_EQ(abc, aggregate_csv(aggregate_curves({b, c, a})));
  const std::vector<AggregateRow> rows = aggregate_curves({a, b, c});
  std::vector<double> xs;
  for (const auto& r : rows) xs.push_back(r.x);
  EXPECT_EQ(xs, (std::vector<double>{0, 5, 10, 15, 20, 25}));
  EXPECT_DOUBLE_EQ(rows[1].mean, (0.25 + 0.4 + 0.1) / 3.0);
  EXPECT_EQ(abc.substr(0, abc.find('\n')), "env_samples,mean,se");
}

TEST_F(HarnessTest, ReadCurveAndAggregateFiles) {
  spit(dir_ / "a/learning_curve.csv", "seed,env_samples,test_return_mean\n1,0,0\n1,10,1\n");
  spit(dir_ / "b/learning_curve.csv", "env_samples,other,test_return_mean\n0,9,1\n10,9,1\n");
  spit(dir_ / "empty.csv", "");
  spit(dir_ / "header_only.csv", "x,y\n");
  EXPECT_THROW(read_curve((dir_ / "empty.csv").string()), std::invalid_argument);
  EXPECT_THROW(read_curve((dir_ / "header_only.csv").string()), std::invalid_argument);
  const std::vector<std::string> paths = expand_glob((dir_ / "*/learning_curve.csv").string());
  ASSERT_EQ(paths.size(), 2U);
  aggregate_runs(paths, (dir_ / "agg.csv").string());
  EXPECT_EQ(slurp(dir_ / "agg.csv"), "env_samples,mean,se\n0,0.5,0.3535533906\n10,1,0\n");
  std::vector<std::string> reversed(paths.rbegin(), paths.rend());
  aggregate_runs(reversed, (dir_ / "agg2.csv").string());
  EXPECT_EQ(slurp(dir_ / "agg.csv"), slurp(dir_ / "agg2.csv"));
  EXPECT_TRUE(expand_glob((dir_ / "nothing*").string()).empty());
}

}  // namespace
}  // namespace decmarl
