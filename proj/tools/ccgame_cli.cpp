// ccgame: solve, roll out, benchmark and summarize chance-constrained LQG games.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccgame/errors.hpp"
#include "ccgame/pipeline.hpp"
#include "ccgame/policy_io.hpp"
#include "ccgame/scenario_io.hpp"
#include "ccgame/simulate.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ccgame;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarning = 2;

struct Options {
  std::string scenario;
  std::string policy;
  int iters = 2000;
  std::string eta = "auto";
  int samples = 100;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool trace = false;
  int replan_every = 1;
  std::vector<std::string> relinearize;
  bool relinearize_given = false;
  bool dump_trajectories = false;
  std::vector<std::string> stats;
};

void report_error(const std::exception& e) {
  nlohmann::json j;
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    j["error"] = std::string(to_string(err->kind()));
    if (const auto* v = dynamic_cast<const ValidationError*>(err)) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& item : v->violations()) {
        list.push_back({{"kind", std::string(to_string(item.kind))},
                        {"field", item.field},
                        {"detail", item.detail},
                        {"value", item.value}});
      }
      j["violations"] = std::move(list);
    } else if (const auto* d = dynamic_cast<const DegenerateReferenceError*>(err)) {
      j["agent_i"] = d->agent_i();
      j["agent_j"] = d->agent_j();
      j["time"] = d->time();
    } else if (const auto* s = dynamic_cast<const SingularStageSystemError*>(err)) {
      j["stage"] = s->stage();
      j["rcond"] = s->rcond();
    }
  } else {
    j["error"] = "Internal";
  }
  j["message"] = e.what();
  std::cerr << j.dump() << "\n";
}

void warn(const std::string& what) {
  std::cerr << nlohmann::json{{"warning", what}}.dump() << "\n";
}

DualAscentOptions dual_options(const Options& o) {
  DualAscentOptions d;
  if (o.iters < 1) throw Error(ErrorKind::InvalidValue, "--iters must be at least 1");
  d.max_iterations = o.iters;
  if (o.eta != "auto") {
    try {
      std::size_t used = 0;
      d.step_size = std::stod(o.eta, &used);
      if (used != o.eta.size()) throw std::invalid_argument(o.eta);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidValue, "--eta expects 'auto' or a positive number");
    }
    if (!(*d.step_size > 0.0)) throw Error(ErrorKind::InvalidValue, "--eta must be positive");
  }
  return d;
}

int relinearize_count(const Options& o) {
  if (!o.relinearize_given) return 0;
  if (o.relinearize.empty() || o.relinearize.front().empty()) return 3;
  const auto& text = o.relinearize.front();
  int n = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc() || end != text.data() + text.size() || n < 0) {
    throw Error(ErrorKind::InvalidValue, "--relinearize must be a nonnegative integer");
  }
  return n;
}

struct LoadedScenario {
  std::string path;
  std::string fingerprint;
  GameProblem problem;
};

LoadedScenario load(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::InvalidValue, "--scenario is required");
  LoadedScenario s;
  s.path = path;
  const std::string text = read_file(path);
  s.fingerprint = sha256_hex(text);
  s.problem = build_problem(validate_scenario(parse_scenario(text)));
  return s;
}

class Run {
 public:
  Run(std::string command, const Options& o) : out_(o.out) {
    record_.command = std::move(command);
    record_.started = utc_now();
    start_ = std::chrono::steady_clock::now();
    fs::create_directories(out_);
  }
  fs::path path(const std::string& name) {
    record_.outputs.push_back(name);
    return out_ / name;
  }
  void scenario(const LoadedScenario& s) {
    record_.scenario_path = s.path;
    record_.scenario_fingerprint = s.fingerprint;
  }
  void option(const std::string& k, const std::string& v) { record_.options.emplace_back(k, v); }
  void finish() {
    record_.finished = utc_now();
    record_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    append_manifest(out_, record_);
  }

 private:
  fs::path out_;
  RunRecord record_;
  std::chrono::steady_clock::time_point start_;
};

int cmd_solve(const Options& o) {
  const auto s = load(o.scenario);
  const auto dual = dual_options(o);
  const int relin = relinearize_count(o);
  Run run("solve", o);
  run.scenario(s);
  run.option("iters", std::to_string(o.iters));
  run.option("eta", o.eta);
  run.option("relinearize", std::to_string(relin));

  const auto outcome = solve_problem(s.problem, dual, relin);
  const auto& rep = outcome.report;
  PolicyFile pf;
  pf.scenario_path = fs::absolute(o.scenario).lexically_normal().string();
  pf.scenario_fingerprint = s.fingerprint;
  pf.policy = rep.policy;
  pf.reference_means = outcome.reference_means;
  save_policy(pf, run.path("policy.json"));
  write_report(rep, dual, run.path("report.json"));
  if (o.trace) write_trace_csv(rep, run.path("trace.csv"));
  run.finish();

  std::printf("constraints %d  iterations %d  termination %s\n", outcome.constraints.size(),
              rep.iterations, to_string(rep.termination).c_str());
  std::printf("feasibility %.3e  complementarity %.3e  L %.6g  eta %.6g\n",
              rep.feasibility_residual, rep.complementarity, rep.lipschitz, rep.eta);
  if (!rep.within_tolerance(dual)) {
    warn("residuals above tolerance after " + std::to_string(rep.iterations) + " iterations");
    return kExitWarning;
  }
  return kExitOk;
}

int cmd_rollout(const Options& o) {
  if (o.policy.empty()) throw Error(ErrorKind::InvalidValue, "--policy is required");
  const auto pf = load_policy(o.policy);
  const auto s = load(o.scenario.empty() ? pf.scenario_path : o.scenario);
  check_fingerprint(pf, s.fingerprint);
  if (pf.policy.horizon() != s.problem.horizon ||
      pf.policy.num_players() != s.problem.game.num_players()) {
    throw Error(ErrorKind::DimensionMismatch, "policy dimensions do not match the scenario");
  }
  if (o.samples < 1) throw Error(ErrorKind::InvalidValue, "--samples must be positive");
  const std::uint64_t seed = o.seed.value_or(s.problem.seed);
  Run run("rollout", o);
  run.scenario(s);
  run.option("policy", o.policy);
  run.option("samples", std::to_string(o.samples));
  run.option("seed", std::to_string(seed));

  RolloutOptions ro;
  ro.threads = default_thread_count();
  const auto batch = rollout(s.problem, pf.policy, seed, o.samples, ro);
  const auto stats = evaluate_safety(batch, s.problem);
  write_stats_csv({make_stats_row("game", stats, seed)}, run.path("stats.csv"));
  if (o.dump_trajectories) {
    write_trajectories(batch, s.problem, run.path("trajectories"));
  }
  run.finish();
  std::printf("samples %d  violations %d  rate %.4f  wilson [%.4f, %.4f]  cost %.4f\n",
              stats.samples, stats.violations, stats.collision_rate, stats.interval.lo,
              stats.interval.hi, stats.cost_mean);
  if (stats.unreached > 0) {
    std::printf("%d of %d samples did not reach the goal tolerance\n", stats.unreached,
                stats.samples);
  }
  return kExitOk;
}

int cmd_mpc(const Options& o) {
  const auto s = load(o.scenario);
  if (o.samples < 1) throw Error(ErrorKind::InvalidValue, "--samples must be positive");
  if (o.replan_every < 1) throw Error(ErrorKind::InvalidValue, "--replan-every must be >= 1");
  const std::uint64_t seed = o.seed.value_or(s.problem.seed);
  Run run("mpc", o);
  run.scenario(s);
  run.option("samples", std::to_string(o.samples));
  run.option("seed", std::to_string(seed));
  run.option("replan_every", std::to_string(o.replan_every));
  run.option("iters", std::to_string(o.iters));
  run.option("eta", o.eta);

  MpcOptions mo;
  mo.replan_every = o.replan_every;
  mo.dual = dual_options(o);
  mo.threads = default_thread_count();
  const auto result = central_mpc(s.problem, passive_reference_means(s.problem), seed, o.samples, mo);
  const auto stats = evaluate_safety(result.batch, s.problem);
  write_stats_csv({make_stats_row("central_mpc", stats, seed)}, run.path("stats.csv"));
  if (o.dump_trajectories) {
    write_trajectories(result.batch, s.problem, run.path("trajectories"));
  }
  run.option("mean_replan_seconds", format_double(result.mean_replan_seconds));
  run.finish();
  std::printf("samples %d  violations %d  rate %.4f  wilson [%.4f, %.4f]  cost %.4f\n",
              stats.samples, stats.violations, stats.collision_rate, stats.interval.lo,
              stats.interval.hi, stats.cost_mean);
  if (!result.failures.empty()) {
    for (const auto& f : result.failures) {
      warn("sample " + std::to_string(f.sample) + " step " + std::to_string(f.step) + ": " +
           f.message);
    }
    return kExitWarning;
  }
  return kExitOk;
}

int cmd_report(const Options& o) {
  if (o.stats.empty()) throw Error(ErrorKind::InvalidValue, "no stats files given");
  std::vector<StatsRow> rows;
  for (const auto& path : o.stats) {
    for (auto& r : read_stats_csv(path)) rows.push_back(std::move(r));
  }
  Run run("report", o);
  for (const auto& path : o.stats) run.option("stats", path);
  write_stats_csv(rows, run.path("summary.csv"));
  run.finish();
  std::printf("%-14s %8s %12s %12s %10s %10s %22s\n", "method", "samples", "cost_mean", "cost_std",
              "travel_s", "col_rate", "wilson95");
  for (const auto& r : rows) {
    std::printf("%-14s %8d %12.4f %12.4f %10.3f %10.4f      [%.4f, %.4f]\n", r.method.c_str(),
                r.samples, r.cost_mean, r.cost_std, r.travel_mean_s, r.collision_rate, r.wilson_lo,
                r.wilson_hi);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained LQG game solver"};
  app.set_version_flag("--version", std::string(CCGAME_VERSION));
  app.require_subcommand(1);
  Options o;

  auto* solve = app.add_subcommand("solve", "Solve for the feedback GNE policy");
  solve->add_option("--scenario", o.scenario, "Scenario JSON")->required();
  solve->add_option("--iters", o.iters, "Dual ascent iterations")->capture_default_str();
  solve->add_option("--eta", o.eta, "Step size: auto or a number")->capture_default_str();
  solve->add_option("--out", o.out, "Output directory")->capture_default_str();
  solve->add_flag("--trace", o.trace, "Write the iteration trace CSV");
  auto* relin = solve->add_option("--relinearize", o.relinearize,
                                  "Re-solve around the previous solution N times (default 3)")
                    ->expected(0, 1);

  auto* roll = app.add_subcommand("rollout", "Monte Carlo rollouts of a solved policy");
  roll->add_option("--policy", o.policy, "Policy JSON")->required();
  roll->add_option("--scenario", o.scenario, "Scenario JSON (default: the one in the policy)");
  roll->add_option("--samples", o.samples, "Number of rollouts")->capture_default_str();
  roll->add_option("--seed", o.seed, "Random seed (default: scenario seed)");
  roll->add_option("--out", o.out, "Output directory")->capture_default_str();
  roll->add_flag("--dump-trajectories", o.dump_trajectories, "One CSV per sample");

  auto* mpc = app.add_subcommand("mpc", "Central MPC baseline");
  mpc->add_option("--scenario", o.scenario, "Scenario JSON")->required();
  mpc->add_option("--samples", o.samples, "Number of seeded runs")->capture_default_str();
  mpc->add_option("--seed", o.seed, "Random seed (default: scenario seed)");
  mpc->add_option("--replan-every", o.replan_every, "Replanning interval in steps")
      ->capture_default_str();
  mpc->add_option("--iters", o.iters, "Dual ascent iterations per replan")->capture_default_str();
  mpc->add_option("--eta", o.eta, "Step size: auto or a number")->capture_default_str();
  mpc->add_option("--out", o.out, "Output directory")->capture_default_str();
  mpc->add_flag("--dump-trajectories", o.dump_trajectories, "One CSV per sample");

  auto* report = app.add_subcommand("report", "Summarize stats CSV files");
  report->add_option("stats", o.stats, "Stats CSV files");
  report->add_option("--out", o.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  o.relinearize_given = relin->count() > 0;

  try {
    if (*solve) return cmd_solve(o);
    if (*roll) return cmd_rollout(o);
    if (*mpc) return cmd_mpc(o);
    if (*report) return cmd_report(o);
  } catch (const std::exception& e) {
    report_error(e);
    return kExitError;
  }
  return kExitError;
}
