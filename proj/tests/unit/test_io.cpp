#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ccgame/errors.hpp"
#include "ccgame/pipeline.hpp"
#include "ccgame/policy_io.hpp"
#include "ccgame/scenario_io.hpp"
#include "fixtures.hpp"

using namespace ccgame;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ccgame_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(PolicyFile, RoundTripIsExact) {
  const auto p = build_problem(validate_scenario(ccgame::testing::random_scenario(1, 2, 5)));
  DualAscentOptions o;
  o.max_iterations = 50;
  const auto solved = solve_problem(p, o);
  PolicyFile file;
  file.scenario_path = "random.json";
  file.scenario_fingerprint = sha256_hex("contents");
  file.policy = solved.report.policy;
  file.reference_means = solved.reference_means;
  const auto dir = scratch("policy");
  save_policy(file, dir / "policy.json");
  const auto back = load_policy(dir / "policy.json");
  EXPECT_EQ(back.scenario_path, file.scenario_path);
  EXPECT_EQ(back.scenario_fingerprint, file.scenario_fingerprint);
  ASSERT_EQ(back.policy.horizon(), 5);
  ASSERT_EQ(back.policy.num_players(), 2);
  for (int t = 0; t < 5; ++t) {
    for (int i = 0; i < 2; ++i) {
      EXPECT_EQ(back.policy.K[t][i], file.policy.K[t][i]);
      EXPECT_EQ(back.policy.alpha[t][i], file.policy.alpha[t][i]);
    }
  }
  ASSERT_EQ(back.reference_means.size(), file.reference_means.size());
  for (std::size_t t = 0; t < file.reference_means.size(); ++t) {
    EXPECT_EQ(back.reference_means[t], file.reference_means[t]);
  }
}

TEST(PolicyFile, FingerprintMismatch) {
  PolicyFile file;
  file.scenario_fingerprint = sha256_hex("a");
  EXPECT_NO_THROW(check_fingerprint(file, sha256_hex("a")));
  try {
    check_fingerprint(file, sha256_hex("b"));
    FAIL() << "expected FingerprintMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FingerprintMismatch);
  }
}

TEST(PolicyFile, MalformedFileIsFormatError) {
  const auto dir = scratch("badpolicy");
  write(dir / "policy.json", "{\"horizon\": 2}");
  try {
    load_policy(dir / "policy.json");
    FAIL() << "expected Format";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST(FormatDouble, RoundTripsBits) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(StatsCsv, WriteReadRoundTrip) {
  StatsRow a;
  a.method = "game";
  a.samples = 10000;
  a.seed = 18446744073709551615ull;
  a.cost_mean = 0.25;
  a.cost_std = 1.0 / 3.0;
  a.travel_mean_s = 4.0;
  a.collision_rate = 0.0;
  a.wilson_lo = 0.0;
  a.wilson_hi = 3.84e-4;
  StatsRow b = a;
  b.method = "central_mpc";
  const auto dir = scratch("stats");
  write_stats_csv({a, b}, dir / "stats.csv");
  std::ifstream in(dir / "stats.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kStatsHeader);
  const auto rows = read_stats_csv(dir / "stats.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "game");
  EXPECT_EQ(rows[1].method, "central_mpc");
  EXPECT_EQ(rows[0].seed, a.seed);
  EXPECT_EQ(rows[0].cost_std, a.cost_std);
  EXPECT_EQ(rows[1].wilson_hi, a.wilson_hi);
}

TEST(StatsCsv, SchemaViolationsAreFormatErrors) {
  const auto dir = scratch("badstats");
  write(dir / "header.csv", "method,samples\ngame,1\n");
  write(dir / "fields.csv", std::string(kStatsHeader) + "\ngame,1,2,3\n");
  write(dir / "number.csv", std::string(kStatsHeader) + "\ngame,1,2,x,0,0,0,0,0\n");
  write(dir / "empty.csv", "");
  for (const char* f : {"header.csv", "fields.csv", "number.csv", "empty.csv"}) {
    try {
      read_stats_csv(dir / f);
      FAIL() << f;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Format) << f;
    }
  }
}

TEST(Report, JsonAndTraceLayout) {
  const auto p = build_problem(validate_scenario(ccgame::testing::random_scenario(2, 2, 5)));
  DualAscentOptions o;
  o.max_iterations = 20;
  const auto solved = solve_problem(p, o);
  const auto dir = scratch("report");
  write_report(solved.report, o, dir / "report.json");
  write_trace_csv(solved.report, dir / "trace.csv");
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  for (const char* key : {"lambda_bar", "feasibility_residual", "complementarity", "lipschitz",
                          "eta", "iterations", "termination", "within_tolerance",
                          "num_constraints", "player_costs"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["iterations"].get<int>(), solved.report.iterations);
  EXPECT_EQ(j["lambda_bar"].size(), static_cast<std::size_t>(solved.constraints.size()));
  std::ifstream in(dir / "trace.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,max_violation,complementarity,dual_value_p1,eta");
  int count = 0;
  while (std::getline(in, line)) count += !line.empty();
  EXPECT_EQ(count, solved.report.iterations);
}

TEST(Manifest, AppendsRunsToOneFile) {
  const auto dir = scratch("manifest");
  RunRecord run;
  run.command = "solve";
  run.options = {{"iters", "10"}};
  run.outputs = {"policy.json"};
  run.started = utc_now();
  run.finished = utc_now();
  append_manifest(dir, run);
  run.command = "rollout";
  append_manifest(dir, run);
  const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  ASSERT_EQ(j["runs"].size(), 2u);
  EXPECT_EQ(j["runs"][0]["command"], "solve");
  EXPECT_EQ(j["runs"][1]["command"], "rollout");
  EXPECT_EQ(j["runs"][0]["options"]["iters"], "10");
  EXPECT_EQ(j["tool"], "ccgame");
  EXPECT_EQ(utc_now().size(), 20u);
}

TEST(Trajectories, OneCsvPerSample) {
  const auto p = build_problem(validate_scenario(
      load_scenario(ccgame::testing::scenario_path("intersection-mini.json"))));
  DualAscentOptions o;
  o.max_iterations = 20;
  const auto solved = solve_problem(p, o);
  const auto batch = rollout(p, solved.report.policy, 1, 2);
  const auto dir = scratch("traj");
  write_trajectories(batch, p, dir);
  ASSERT_TRUE(fs::exists(dir / "sample_0.csv"));
  ASSERT_TRUE(fs::exists(dir / "sample_1.csv"));
  std::ifstream in(dir / "sample_0.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,agent,px,py,theta,v,a,omega");
  int count = 0;
  while (std::getline(in, line)) count += !line.empty();
  EXPECT_EQ(count, 21 * 2);
}
