#include "ccgame/policy_io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "ccgame/errors.hpp"
#include "ccgame/scenario_io.hpp"
#include "json.hpp"

namespace ccgame {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

Matrix matrix_from(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::Format, "policy: expected a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorKind::Format, "policy: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Vector vector_from(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::Format, "policy: expected a vector");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Format, "cannot write " + path.string());
  out << text;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Format, where + ": not a number '" + s + "'");
  }
}

}  // namespace

void save_policy(const PolicyFile& p, const std::filesystem::path& path) {
  json root;
  root["scenario"] = p.scenario_path;
  root["scenario_sha256"] = p.scenario_fingerprint;
  root["horizon"] = p.policy.horizon();
  root["players"] = p.policy.num_players();
  json K = json::array();
  json alpha = json::array();
  for (int t = 0; t < p.policy.horizon(); ++t) {
    json kt = json::array();
    json at = json::array();
    for (int i = 0; i < p.policy.num_players(); ++i) {
      kt.push_back(matrix_json(p.policy.K[t][i]));
      at.push_back(vector_json(p.policy.alpha[t][i]));
    }
    K.push_back(std::move(kt));
    alpha.push_back(std::move(at));
  }
  root["K"] = std::move(K);
  root["alpha"] = std::move(alpha);
  json refs = json::array();
  for (const auto& x : p.reference_means) refs.push_back(vector_json(x));
  root["reference_means"] = std::move(refs);
  write_text(path, root.dump(1) + "\n");
}

PolicyFile load_policy(const std::filesystem::path& path) {
  json root;
  try {
    root = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, "policy " + path.string() + ": " + e.what());
  }
  try {
    PolicyFile p;
    p.scenario_path = root.at("scenario").get<std::string>();
    p.scenario_fingerprint = root.at("scenario_sha256").get<std::string>();
    const int T = root.at("horizon").get<int>();
    const int N = root.at("players").get<int>();
    const auto& K = root.at("K");
    const auto& alpha = root.at("alpha");
    if (static_cast<int>(K.size()) != T || static_cast<int>(alpha.size()) != T) {
      throw Error(ErrorKind::Format, "policy: sequence length differs from horizon");
    }
    p.policy.K.resize(T);
    p.policy.alpha.resize(T);
    for (int t = 0; t < T; ++t) {
      if (static_cast<int>(K[t].size()) != N || static_cast<int>(alpha[t].size()) != N) {
        throw Error(ErrorKind::Format, "policy: player count differs");
      }
      for (int i = 0; i < N; ++i) {
        p.policy.K[t].push_back(matrix_from(K[t][i]));
        p.policy.alpha[t].push_back(vector_from(alpha[t][i]));
      }
    }
    if (root.contains("reference_means")) {
      for (const auto& x : root["reference_means"]) p.reference_means.push_back(vector_from(x));
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, "policy " + path.string() + ": " + e.what());
  }
}

void check_fingerprint(const PolicyFile& p, const std::string& scenario_fingerprint) {
  if (p.scenario_fingerprint != scenario_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                "policy was solved for scenario " + p.scenario_fingerprint + ", got " +
                    scenario_fingerprint);
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_report(const DualSolveReport& report, const DualAscentOptions& options,
                  const std::filesystem::path& path) {
  json root;
  root["lambda_bar"] = vector_json(report.lambda_bar);
  root["feasibility_residual"] = report.feasibility_residual;
  root["complementarity"] = report.complementarity;
  root["lipschitz"] = report.lipschitz;
  root["eta"] = report.eta;
  root["iterations"] = report.iterations;
  root["termination"] = to_string(report.termination);
  root["within_tolerance"] = report.within_tolerance(options);
  // Residual left above tolerance after the full iteration budget.
  root["stalled"] = report.termination == Termination::MaxIterations;
  root["tol_feas"] = options.tol_feas;
  root["tol_slack"] = options.tol_slack;
  root["num_constraints"] = report.lambda_bar.size();
  root["player_costs"] = report.player_costs;
  write_text(path, root.dump(2) + "\n");
}

void write_trace_csv(const DualSolveReport& report, const std::filesystem::path& path) {
  std::string out = "iter,max_violation,complementarity,dual_value_p1,eta\n";
  for (const auto& rec : report.trace) {
    out += std::to_string(rec.iteration) + "," + format_double(rec.max_violation) + "," +
           format_double(rec.complementarity) + "," + format_double(rec.dual_value) + "," +
           format_double(report.eta) + "\n";
  }
  write_text(path, out);
}

StatsRow make_stats_row(const std::string& method, const SafetyStats& stats, std::uint64_t seed) {
  return {method,
          stats.samples,
          seed,
          stats.cost_mean,
          stats.cost_std,
          stats.travel_mean,
          stats.collision_rate,
          stats.interval.lo,
          stats.interval.hi};
}

void write_stats_csv(const std::vector<StatsRow>& rows, const std::filesystem::path& path) {
  std::string out = std::string(kStatsHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.samples) + "," + std::to_string(r.seed) + "," +
           format_double(r.cost_mean) + "," + format_double(r.cost_std) + "," +
           format_double(r.travel_mean_s) + "," + format_double(r.collision_rate) + "," +
           format_double(r.wilson_lo) + "," + format_double(r.wilson_hi) + "\n";
  }
  write_text(path, out);
}

std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kStatsHeader) {
    throw Error(ErrorKind::Format, path.string() + ": stats header does not match schema");
  }
  std::vector<StatsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto f = split(line, ',');
    if (f.size() != 9) throw Error(ErrorKind::Format, where + ": expected 9 fields");
    StatsRow r;
    r.method = f[0];
    r.samples = static_cast<int>(parse_double(f[1], where));
    try {
      r.seed = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Format, where + ": bad seed");
    }
    r.cost_mean = parse_double(f[3], where);
    r.cost_std = parse_double(f[4], where);
    r.travel_mean_s = parse_double(f[5], where);
    r.collision_rate = parse_double(f[6], where);
    r.wilson_lo = parse_double(f[7], where);
    r.wilson_hi = parse_double(f[8], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_trajectories(const RolloutBatch& batch, const GameProblem& problem,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int T = problem.horizon;
  std::vector<int> input_col(problem.num_agents(), 0);
  for (int i = 1; i < problem.num_agents(); ++i) {
    input_col[i] = input_col[i - 1] + problem.agents[i - 1].input_dim;
  }
  for (int s = 0; s < batch.samples; ++s) {
    std::string out = "t,agent,px,py,theta,v,a,omega\n";
    for (int t = 0; t <= T; ++t) {
      const Vector x = batch.states[s].row(t).transpose() + problem.state_offset[t];
      for (int i = 0; i < problem.num_agents(); ++i) {
        const Vector xi = problem.agent_state(i, x);
        std::string cells[6];
        if (problem.unicycle) {
          for (int k = 0; k < 4; ++k) cells[k] = format_double(xi[k]);
        } else {
          const auto& pos = problem.agents[i].position_indices;
          for (std::size_t k = 0; k < pos.size() && k < 2; ++k) cells[k] = format_double(xi[pos[k]]);
        }
        if (t < T && problem.unicycle) {
          const Vector u = batch.inputs[s].row(t).segment(input_col[i], 2).transpose() +
                           problem.input_offset[t][i];
          cells[4] = format_double(u[0]);
          cells[5] = format_double(u[1]);
        }
        out += std::to_string(t) + "," + std::to_string(i);
        for (const auto& c : cells) out += "," + c;
        out += "\n";
      }
    }
    write_text(dir / ("sample_" + std::to_string(s) + ".csv"), out);
  }
}

void append_manifest(const std::filesystem::path& dir, const RunRecord& run) {
  const auto path = dir / "manifest.json";
  json root;
  if (std::filesystem::exists(path)) {
    try {
      root = json::parse(read_file(path));
    } catch (const json::exception&) {
      root = json::object();
    }
  }
  if (!root.contains("runs") || !root["runs"].is_array()) root["runs"] = json::array();
  root["tool"] = "ccgame";
  root["version"] = CCGAME_VERSION;
  json opts = json::object();
  for (const auto& [k, v] : run.options) opts[k] = v;
  root["runs"].push_back({{"command", run.command},
                          {"scenario", run.scenario_path},
                          {"scenario_sha256", run.scenario_fingerprint},
                          {"options", std::move(opts)},
                          {"outputs", run.outputs},
                          {"started", run.started},
                          {"finished", run.finished},
                          {"wall_seconds", run.wall_seconds}});
  write_text(path, root.dump(2) + "\n");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ccgame
