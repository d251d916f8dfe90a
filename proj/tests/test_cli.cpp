#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "hdid/cli.hpp"
#include "test_util.hpp"

using namespace hdid;
using testutil::read_file;
using testutil::write_file;

namespace {

struct RunResult {
  int code = 0;
  std::string out, err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "hdid");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunResult r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Data rows of a CSV text (non-comment lines after the header).
std::vector<std::string> data_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    rows.push_back(line);
  }
  return rows;
}

std::string header_of(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  return {};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testutil::scratch_dir("cli");
    ::unsetenv("HDID_SEED");
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::filesystem::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"study", "--bogus"}).code, 2);
  EXPECT_EQ(run({"bias", "--seed", "abc", "--out", path("b")}).code, 2);
  EXPECT_EQ(run({"study", "--method", "nonsense", "--out", path("s")}).code, 2);
}

TEST_F(Cli, UnknownConfigKeyIsRejected) {
  write_file(path("c.json"), R"({"prior.spike": 0.1})");
  const auto r = run({"bias", "--config", path("c.json"), "--out", path("b")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("prior.spike"), std::string::npos);
  write_file(path("c2.json"), R"({"bias.replications": "ten"})");
  EXPECT_EQ(run({"bias", "--config", path("c2.json"), "--out", path("b")}).code, 2);
}

TEST_F(Cli, SimulateTinyShape) {
  write_file(path("c.json"),
             R"({"data.J": 2, "data.n": 1, "data.alpha": [1], "data.beta_baseline": [0], "data.beta_change": [1]})");
  ASSERT_EQ(run({"simulate", "--config", path("c.json"), "--out", path("sim")}).code, 0);
  EXPECT_EQ(data_rows(read_file(path("sim/individuals.csv"))).size(), 4u);
  EXPECT_EQ(header_of(read_file(path("sim/groups.csv"))), "group_id,T,X1");
  const auto truth = cli::json::parse(read_file(path("sim/truth.json")));
  EXPECT_EQ(truth["groups"].size(), 2u);
  EXPECT_EQ(truth["config"]["data.n"], 1);
}

TEST_F(Cli, SimulateStudyConfigAndDeterminism) {
  ASSERT_EQ(run({"simulate", "--seed", "3", "--out", path("a")}).code, 0);
  ASSERT_EQ(run({"simulate", "--seed", "3", "--out", path("b")}).code, 0);
  EXPECT_EQ(header_of(read_file(path("a/groups.csv"))), "group_id,T,X1,X2,X3,X4,X5,X6,X7,X8");
  for (const char* f : {"individuals.csv", "groups.csv", "truth.json"}) {
    EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
  }
  ASSERT_EQ(run({"simulate", "--seed", "4", "--out", path("c")}).code, 0);
  EXPECT_NE(read_file(path("a/individuals.csv")), read_file(path("c/individuals.csv")));
}

TEST_F(Cli, OutputsCarrySeedAndConfig) {
  ASSERT_EQ(run({"bias", "--seed", "77", "--replications", "1", "--out", path("b")}).code, 0);
  const auto text = read_file(path("b/bias.csv"));
  EXPECT_NE(text.find("# seed: 77\n"), std::string::npos);
  EXPECT_NE(text.find("\"bias.replications\":1"), std::string::npos);
  EXPECT_EQ(text.find("workers"), std::string::npos);
}

TEST_F(Cli, SeedPrecedence) {
  auto seed_line = [&](const std::vector<std::string>& extra) {
    std::vector<std::string> args{"bias", "--replications", "1", "--out", path("p")};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(run(args).code, 0);
    const auto text = read_file(path("p/bias.csv"));
    const auto at = text.find("# seed: ");
    return text.substr(at + 8, text.find('\n', at) - at - 8);
  };
  EXPECT_EQ(seed_line({}), std::to_string(cli::kDefaultSeed));
  ::setenv("HDID_SEED", "5", 1);
  EXPECT_EQ(seed_line({}), "5");
  write_file(path("c.json"), R"({"seed": 6})");
  EXPECT_EQ(seed_line({"--config", path("c.json")}), "6");
  EXPECT_EQ(seed_line({"--config", path("c.json"), "--seed", "7"}), "7");
  ::setenv("HDID_SEED", "x", 1);
  EXPECT_EQ(run({"bias", "--replications", "1", "--out", path("p")}).code, 2);
  ::unsetenv("HDID_SEED");
}

TEST_F(Cli, BiasSweepShapeAndDeterminism) {
  ASSERT_EQ(run({"bias", "--replications", "1", "--seed", "9", "--out", path("a")}).code, 0);
  ASSERT_EQ(run({"bias", "--replications", "1", "--seed", "9", "--out", path("b"), "--workers", "2"}).code, 0);
  const auto a = read_file(path("a/bias.csv"));
  EXPECT_EQ(a, read_file(path("b/bias.csv")));
  const auto rows = data_rows(a);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows.front().substr(0, 5), "Null,");
  EXPECT_EQ(rows.back().substr(0, 5), "Full,");
  EXPECT_EQ(header_of(a), "inclusion,no_adjust,adjust");
}

TEST_F(Cli, FitRoundTripHasNoValidationWarnings) {
  ASSERT_EQ(run({"simulate", "--seed", "21", "--j", "60", "--out", path("sim")}).code, 0);
  const auto r = run({"fit", "--individuals", path("sim/individuals.csv"), "--groups", path("sim/groups.csv"),
                      "--method", "Full", "--method", "separate", "--iterations", "1500", "--burnin", "500",
                      "--out", path("fit")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto post = cli::json::parse(read_file(path("fit/posterior.json")));
  EXPECT_TRUE(post["warnings"].empty());
  EXPECT_EQ(post["methods"]["Full"]["draws"], 1000);
  EXPECT_EQ(post["methods"]["Separate"]["inclusion"]["change"].size(), 8u);
  const auto table = read_file(path("fit/intervals.csv"));
  EXPECT_EQ(header_of(table), "parameter,Full_mean,Full_lower,Full_upper,Separate_mean,Separate_lower,Separate_upper");
  EXPECT_EQ(data_rows(table).front().substr(0, 6), "Delta,");
}

TEST_F(Cli, FitConstantTreatmentIsDataError) {
  write_file(path("i.csv"), "group_id,period,y\ng1,0,1\ng1,0,2\ng1,1,3\ng1,1,4\ng2,0,0\ng2,0,1\ng2,1,1\ng2,1,2\n");
  write_file(path("g.csv"), "group_id,T\ng1,1\ng2,1\n");
  const auto r = run({"fit", "--individuals", path("i.csv"), "--groups", path("g.csv"), "--out", path("f")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("treatment has zero variance"), std::string::npos);
}

TEST_F(Cli, FitMalformedRowNamesLine) {
  write_file(path("i.csv"), "a,b,c\n");
  write_file(path("g.csv"), "group_id,T\ng1,1\n");
  const auto r = run({"fit", "--individuals", path("i.csv"), "--groups", path("g.csv"), "--out", path("f")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);
  EXPECT_EQ(run({"fit", "--out", path("f")}).code, 2);
  EXPECT_EQ(run({"fit", "--individuals", path("none.csv"), "--groups", path("g.csv"), "--out", path("f")}).code, 3);
}

TEST_F(Cli, NonFiniteChainIsNumericalError) {
  // outcomes near the double range overflow the sums of squares
  write_file(path("i.csv"),
             "group_id,period,y\na,0,1e300\na,0,-1e300\na,1,1e300\na,1,-1e300\n"
             "b,0,1e300\nb,0,-1e300\nb,1,1e300\nb,1,-1e300\nc,0,1\nc,1,2\n");
  write_file(path("g.csv"), "group_id,T\na,0\nb,1\nc,2\n");
  const auto r =
      run({"fit", "--individuals", path("i.csv"), "--groups", path("g.csv"), "--method", "Full", "--out", path("f")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("iteration"), std::string::npos);
}

TEST_F(Cli, StudySmokeRunAndWorkerInvariance) {
  const std::vector<std::string> base{"study", "--j", "50", "--replications", "2", "--iterations", "100",
                                      "--burnin", "50", "--seed", "12"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with({"--out", path("w1"), "--workers", "1"})).code, 0);
  ASSERT_EQ(run(with({"--out", path("w2"), "--workers", "2"})).code, 0);
  const auto csv1 = read_file(path("w1/method_study.csv"));
  EXPECT_EQ(csv1, read_file(path("w2/method_study.csv")));
  EXPECT_EQ(read_file(path("w1/method_study.json")), read_file(path("w2/method_study.json")));
  EXPECT_EQ(data_rows(csv1).size(), 6u);
  const auto json = cli::json::parse(read_file(path("w1/method_study.json")));
  EXPECT_EQ(json["methods"].size(), 6u);
  EXPECT_EQ(json["seed"], 12u);
}

TEST_F(Cli, StudyGridKind) {
  write_file(path("c.json"), R"({"study.kind": "grid", "study.roles": [1, 8], "study.choices": [1, 2]})");
  ASSERT_EQ(run({"study", "--config", path("c.json"), "--replications", "2", "--iterations", "100", "--burnin",
                 "50", "--out", path("g")})
                .code,
            0);
  const auto text = read_file(path("g/choice_grid.csv"));
  EXPECT_EQ(data_rows(text).size(), 4u);
  EXPECT_EQ(data_rows(text).front().substr(0, 5), "X1,1,");
  EXPECT_FALSE(std::filesystem::exists(path("g/method_study.csv")));
  EXPECT_EQ(run({"study", "--kind", "neither", "--out", path("g")}).code, 2);
}

// Self-consistency: fitting simulated data (Delta = 1, J = 100) with the Full method
// covers the true effect in at least 90% of seeded reruns.
TEST_F(Cli, FullFitCoversTruthAcrossSeeds) {
  int covered = 0;
  const int seeds = 50;
  for (int s = 1; s <= seeds; ++s) {
    const auto seed = std::to_string(s);
    ASSERT_EQ(run({"simulate", "--seed", seed, "--j", "100", "--out", path("sim")}).code, 0);
    ASSERT_EQ(run({"fit", "--seed", seed, "--individuals", path("sim/individuals.csv"), "--groups",
                   path("sim/groups.csv"), "--method", "Full", "--iterations", "2000", "--burnin", "1000", "--out",
                   path("fit")})
                  .code,
              0);
    const auto post = cli::json::parse(read_file(path("fit/posterior.json")));
    for (const auto& p : post["methods"]["Full"]["parameters"]) {
      if (p["name"] == "Delta" && p["lower"].get<double>() <= 1.0 && 1.0 <= p["upper"].get<double>()) ++covered;
    }
  }
  EXPECT_GE(covered, 45) << covered << " of " << seeds;
}
