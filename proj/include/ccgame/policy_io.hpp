#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccgame/dualascent.hpp"
#include "ccgame/simulate.hpp"

namespace ccgame {

/// Policy file: gains plus the fingerprint of the scenario they were solved for.
struct PolicyFile {
  std::string scenario_path;
  std::string scenario_fingerprint;
  FeedbackPolicy policy;
  /// Mean trajectory of the solve in true coordinates, reused as the
  /// reference for later constraint linearizations.
  Trajectory reference_means;
};

void save_policy(const PolicyFile& p, const std::filesystem::path& path);
PolicyFile load_policy(const std::filesystem::path& path);

/// Throws FingerprintMismatch when the scenario file changed since the solve.
void check_fingerprint(const PolicyFile& p, const std::string& scenario_fingerprint);

std::string format_double(double v);

void write_report(const DualSolveReport& report, const DualAscentOptions& options,
                  const std::filesystem::path& path);
void write_trace_csv(const DualSolveReport& report, const std::filesystem::path& path);

struct StatsRow {
  std::string method;
  int samples = 0;
  std::uint64_t seed = 0;
  double cost_mean = 0.0;
  double cost_std = 0.0;
  double travel_mean_s = 0.0;
  double collision_rate = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
};

inline constexpr const char* kStatsHeader =
    "method,samples,seed,cost_mean,cost_std,travel_mean_s,collision_rate,wilson_lo,wilson_hi";

StatsRow make_stats_row(const std::string& method, const SafetyStats& stats, std::uint64_t seed);
void write_stats_csv(const std::vector<StatsRow>& rows, const std::filesystem::path& path);
/// Throws Error(Format) when the header or a row does not match the schema.
std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path);

/// One CSV per sample with columns t,agent,px,py,theta,v,a,omega in true
/// coordinates. Agents without a unicycle state leave missing columns empty.
void write_trajectories(const RolloutBatch& batch, const GameProblem& problem,
                        const std::filesystem::path& dir);

/// Appends a run to `dir/manifest.json`, creating it when absent, so each
/// artifact directory holds exactly one manifest.
struct RunRecord {
  std::string command;
  std::string scenario_path;
  std::string scenario_fingerprint;
  std::vector<std::pair<std::string, std::string>> options;
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;
  double wall_seconds = 0.0;
};
void append_manifest(const std::filesystem::path& dir, const RunRecord& run);

/// UTC ISO-8601 timestamp.
std::string utc_now();

}  // namespace ccgame
