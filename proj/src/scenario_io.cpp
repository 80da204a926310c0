#include "ccgame/scenario_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "ccgame/errors.hpp"
#include "json.hpp"

namespace ccgame {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Format, where + ": " + what);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(where, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail(where, "unknown key '" + key + "'");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing key '") + key + "'");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  return j.get<int>();
}

std::string sub(const std::string& where, const std::string& key) { return where + "." + key; }
std::string sub(const std::string& where, std::size_t i) {
  return where + "[" + std::to_string(i) + "]";
}

bool is_number_array(const json& j) {
  return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number(); });
}

bool is_dense_matrix(const json& j) {
  return j.is_array() && !j.empty() &&
         std::all_of(j.begin(), j.end(), [](const json& e) { return is_number_array(e); });
}

bool is_matrix(const json& j) {
  return is_dense_matrix(j) || (j.is_object() && (j.contains("diag") || j.contains("blocks")));
}

Vector parse_vector(const json& j, const std::string& where) {
  if (j.is_object()) {
    allow_keys(j, where, {"blocks"});
    std::vector<Vector> parts;
    Eigen::Index n = 0;
    const auto& blocks = require(j, "blocks", where);
    if (!blocks.is_array()) fail(sub(where, "blocks"), "expected an array");
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      parts.push_back(parse_vector(blocks[k], sub(sub(where, "blocks"), k)));
      n += parts.back().size();
    }
    Vector v(n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      v.segment(at, p.size()) = p;
      at += p.size();
    }
    return v;
  }
  if (!is_number_array(j)) fail(where, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  return v;
}

Matrix parse_matrix(const json& j, const std::string& where) {
  if (j.is_object()) {
    if (j.contains("diag")) {
      allow_keys(j, where, {"diag"});
      return parse_vector(j["diag"], sub(where, "diag")).asDiagonal();
    }
    allow_keys(j, where, {"blocks"});
    const auto& blocks = require(j, "blocks", where);
    if (!blocks.is_array()) fail(sub(where, "blocks"), "expected an array");
    std::vector<Matrix> parts;
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      parts.push_back(parse_matrix(blocks[k], sub(sub(where, "blocks"), k)));
      r += parts.back().rows();
      c += parts.back().cols();
    }
    Matrix m = Matrix::Zero(r, c);
    r = c = 0;
    for (const auto& p : parts) {
      m.block(r, c, p.rows(), p.cols()) = p;
      r += p.rows();
      c += p.cols();
    }
    return m;
  }
  if (!is_dense_matrix(j)) fail(where, "expected a matrix (array of equal-length rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) fail(sub(where, r), "ragged matrix row");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

/// A single matrix repeated over the horizon, or an explicit list of them.
std::vector<Matrix> parse_matrix_sequence(const json& j, int horizon, const std::string& where) {
  if (is_matrix(j)) return std::vector<Matrix>(std::max(horizon, 0), parse_matrix(j, where));
  if (!j.is_array()) fail(where, "expected a matrix or a list of matrices");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(parse_matrix(j[k], sub(where, k)));
  return out;
}

std::vector<Vector> parse_vector_sequence(const json& j, int horizon, const std::string& where) {
  if (is_number_array(j) || j.is_object()) {
    return std::vector<Vector>(std::max(horizon, 0), parse_vector(j, where));
  }
  if (!j.is_array()) fail(where, "expected a vector or a list of vectors");
  std::vector<Vector> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(parse_vector(j[k], sub(where, k)));
  return out;
}

std::vector<int> parse_int_list(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(integer(j[k], sub(where, k)));
  return out;
}

std::vector<std::optional<double>> parse_bounds(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers or nulls");
  std::vector<std::optional<double>> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (j[k].is_null()) {
      out.emplace_back();
    } else {
      out.emplace_back(number(j[k], sub(where, k)));
    }
  }
  return out;
}

AgentSpec parse_agent(const json& j, const std::string& where) {
  allow_keys(j, where, {"name", "state_dim", "input_dim", "position_indices"});
  AgentSpec a;
  if (j.contains("name")) {
    if (!j["name"].is_string()) fail(sub(where, "name"), "expected a string");
    a.name = j["name"].get<std::string>();
  }
  a.state_dim = integer(require(j, "state_dim", where), sub(where, "state_dim"));
  a.input_dim = integer(require(j, "input_dim", where), sub(where, "input_dim"));
  if (j.contains("position_indices")) {
    a.position_indices = parse_int_list(j["position_indices"], sub(where, "position_indices"));
  }
  return a;
}

LtvGameDynamics parse_ltv(const json& j, int horizon, std::size_t players, const std::string& where) {
  allow_keys(j, where, {"type", "A", "B", "W", "x0"});
  LtvGameDynamics d;
  d.A = parse_matrix_sequence(require(j, "A", where), horizon, sub(where, "A"));
  d.W = parse_matrix_sequence(require(j, "W", where), horizon, sub(where, "W"));
  d.x0 = parse_vector(require(j, "x0", where), sub(where, "x0"));
  const auto& b = require(j, "B", where);
  if (!b.is_array() || b.size() != players) {
    fail(sub(where, "B"), "expected one entry per agent");
  }
  std::vector<std::vector<Matrix>> by_player;
  for (std::size_t i = 0; i < players; ++i) {
    by_player.push_back(parse_matrix_sequence(b[i], horizon, sub(sub(where, "B"), i)));
  }
  std::size_t T = by_player.empty() ? 0 : by_player.front().size();
  for (const auto& seq : by_player) {
    if (seq.size() != T) fail(sub(where, "B"), "players have different sequence lengths");
  }
  d.B.assign(T, {});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < players; ++i) d.B[t].push_back(by_player[i][t]);
  }
  return d;
}

UnicycleSpec parse_unicycle(const json& j, int horizon, double dt, const std::string& where) {
  allow_keys(j, where, {"type", "initial_states", "nominal_inputs", "W"});
  UnicycleSpec u;
  u.dt = dt;
  const auto& init = require(j, "initial_states", where);
  if (!init.is_array()) fail(sub(where, "initial_states"), "expected a list of states");
  for (std::size_t i = 0; i < init.size(); ++i) {
    const auto where_i = sub(sub(where, "initial_states"), i);
    const Vector v = parse_vector(init[i], where_i);
    if (v.size() != 4) fail(where_i, "unicycle state has 4 entries [px, py, theta, v]");
    u.initial_states.emplace_back(v);
  }
  if (j.contains("nominal_inputs")) {
    const auto& nom = j["nominal_inputs"];
    if (!nom.is_array()) fail(sub(where, "nominal_inputs"), "expected one list per agent");
    for (std::size_t i = 0; i < nom.size(); ++i) {
      const auto where_i = sub(sub(where, "nominal_inputs"), i);
      std::vector<Eigen::Vector2d> seq;
      for (const auto& v : parse_vector_sequence(nom[i], horizon, where_i)) {
        if (v.size() != 2) fail(where_i, "unicycle input has 2 entries [a, omega]");
        seq.emplace_back(v);
      }
      u.nominal_inputs.push_back(std::move(seq));
    }
  }
  u.W = parse_matrix_sequence(require(j, "W", where), horizon, sub(where, "W"));
  return u;
}

CostSpec parse_cost(const json& j, int horizon, const std::string& where) {
  allow_keys(j, where, {"Q", "Q_terminal", "R", "goal"});
  CostSpec c;
  c.Q = parse_matrix_sequence(require(j, "Q", where), horizon, sub(where, "Q"));
  if (j.contains("Q_terminal") && !c.Q.empty()) {
    c.Q.back() = parse_matrix(j["Q_terminal"], sub(where, "Q_terminal"));
  }
  c.R = parse_matrix_sequence(require(j, "R", where), horizon, sub(where, "R"));
  c.goal = parse_vector_sequence(require(j, "goal", where), horizon, sub(where, "goal"));
  return c;
}

Matrix default_collision_weight(const AgentSpec& a) {
  if (a.position_indices.empty()) return Matrix::Identity(a.state_dim, a.state_dim);
  Matrix C = Matrix::Zero(a.state_dim, a.state_dim);
  for (int p : a.position_indices) {
    if (p >= 0 && p < a.state_dim) C(p, p) = 1.0;
  }
  return C;
}

ConstraintSpec parse_constraint(const json& j, const Scenario& s, const std::string& where) {
  const auto& type = require(j, "type", where);
  if (!type.is_string()) fail(sub(where, "type"), "expected a string");
  ConstraintSpec spec;
  if (j.contains("active_times")) {
    spec.active_times = parse_int_list(j["active_times"], sub(where, "active_times"));
  }
  const auto kind = type.get<std::string>();
  if (kind == "box") {
    allow_keys(j, where, {"type", "agent", "lower", "upper", "active_times"});
    BoxConstraint box;
    if (j.contains("lower")) box.lower = parse_bounds(j["lower"], sub(where, "lower"));
    if (j.contains("upper")) box.upper = parse_bounds(j["upper"], sub(where, "upper"));
    if (j.contains("agent")) {
      // Bounds on one agent's block, widened to the shared state.
      const int agent = integer(j["agent"], sub(where, "agent"));
      if (agent < 0 || agent >= s.num_agents()) fail(sub(where, "agent"), "no such agent");
      const auto dim = static_cast<std::size_t>(s.agents[agent].state_dim);
      const auto off = static_cast<std::size_t>(s.state_offset(agent));
      auto widen = [&](std::vector<std::optional<double>>& b, const char* key) {
        if (b.empty()) b.resize(dim);
        if (b.size() != dim) fail(sub(where, key), "expected the agent's state dimension");
        std::vector<std::optional<double>> full(static_cast<std::size_t>(s.state_dim()));
        std::copy(b.begin(), b.end(), full.begin() + static_cast<std::ptrdiff_t>(off));
        b = std::move(full);
      };
      widen(box.lower, "lower");
      widen(box.upper, "upper");
    } else {
      const auto n = static_cast<std::size_t>(s.state_dim());
      if (box.lower.empty()) box.lower.resize(n);
      if (box.upper.empty()) box.upper.resize(n);
    }
    spec.kind = std::move(box);
  } else if (kind == "collision") {
    allow_keys(j, where, {"type", "agents", "radius", "C", "active_times"});
    CollisionConstraint col;
    const auto pair = parse_int_list(require(j, "agents", where), sub(where, "agents"));
    if (pair.size() != 2) fail(sub(where, "agents"), "expected two agent indices");
    col.agent_i = pair[0];
    col.agent_j = pair[1];
    col.radius = number(require(j, "radius", where), sub(where, "radius"));
    if (j.contains("C")) {
      col.C = parse_matrix(j["C"], sub(where, "C"));
    } else if (col.agent_i >= 0 && col.agent_i < s.num_agents()) {
      col.C = default_collision_weight(s.agents[col.agent_i]);
    }
    spec.kind = std::move(col);
  } else {
    fail(sub(where, "type"), "unknown constraint type '" + kind + "'");
  }
  return spec;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

template <typename T>
bool all_equal(const std::vector<T>& seq) {
  return std::all_of(seq.begin(), seq.end(), [&](const T& m) {
    return m.rows() == seq.front().rows() && m.cols() == seq.front().cols() && m == seq.front();
  });
}

template <typename T>
json sequence_to_json(const std::vector<T>& seq) {
  if (!seq.empty() && all_equal(seq)) return to_json(seq.front());
  json out = json::array();
  for (const auto& m : seq) out.push_back(to_json(m));
  return out;
}

json bounds_to_json(const std::vector<std::optional<double>>& b) {
  json out = json::array();
  for (const auto& v : b) out.push_back(v ? json(*v) : json(nullptr));
  return out;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Format, std::string("scenario is not valid JSON: ") + e.what());
  }
  allow_keys(root, "scenario",
             {"agents", "horizon", "dt", "duration", "dynamics", "costs", "constraints",
              "risk_epsilon", "seed"});
  Scenario s;
  const auto& agents = require(root, "agents", "scenario");
  if (!agents.is_array()) fail("agents", "expected a list");
  for (std::size_t i = 0; i < agents.size(); ++i) s.agents.push_back(parse_agent(agents[i], sub("agents", i)));
  s.horizon = integer(require(root, "horizon", "scenario"), "horizon");
  s.dt = number(require(root, "dt", "scenario"), "dt");
  if (root.contains("duration")) s.duration = number(root["duration"], "duration");
  s.risk_epsilon = number(require(root, "risk_epsilon", "scenario"), "risk_epsilon");
  if (root.contains("seed")) {
    const auto& seed = root["seed"];
    if (!seed.is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    s.seed = seed.get<std::uint64_t>();
  }

  const auto& dyn = require(root, "dynamics", "scenario");
  if (!dyn.is_object()) fail("dynamics", "expected an object");
  const auto& type = require(dyn, "type", "dynamics");
  if (type == "ltv") {
    s.dynamics = parse_ltv(dyn, s.horizon, s.agents.size(), "dynamics");
  } else if (type == "unicycle") {
    s.dynamics = parse_unicycle(dyn, s.horizon, s.dt, "dynamics");
  } else {
    fail("dynamics.type", "expected 'ltv' or 'unicycle'");
  }

  const auto& costs = require(root, "costs", "scenario");
  if (!costs.is_array()) fail("costs", "expected one entry per agent");
  for (std::size_t i = 0; i < costs.size(); ++i) s.costs.push_back(parse_cost(costs[i], s.horizon, sub("costs", i)));

  if (root.contains("constraints")) {
    const auto& cons = root["constraints"];
    if (!cons.is_array()) fail("constraints", "expected a list");
    for (std::size_t k = 0; k < cons.size(); ++k) {
      s.constraints.push_back(parse_constraint(cons[k], s, sub("constraints", k)));
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path)); }

std::string dump_scenario(const Scenario& s) {
  json root;
  json agents = json::array();
  for (const auto& a : s.agents) {
    json ja = {{"name", a.name}, {"state_dim", a.state_dim}, {"input_dim", a.input_dim}};
    if (!a.position_indices.empty()) ja["position_indices"] = a.position_indices;
    agents.push_back(std::move(ja));
  }
  root["agents"] = std::move(agents);
  root["horizon"] = s.horizon;
  root["dt"] = s.dt;
  if (s.duration) root["duration"] = *s.duration;
  root["risk_epsilon"] = s.risk_epsilon;
  root["seed"] = s.seed;

  if (const auto* ltv = std::get_if<LtvGameDynamics>(&s.dynamics)) {
    json b = json::array();
    for (int i = 0; i < ltv->num_players(); ++i) {
      std::vector<Matrix> seq;
      for (const auto& bt : ltv->B) seq.push_back(bt[i]);
      b.push_back(sequence_to_json(seq));
    }
    root["dynamics"] = {{"type", "ltv"},
                        {"A", sequence_to_json(ltv->A)},
                        {"B", std::move(b)},
                        {"W", sequence_to_json(ltv->W)},
                        {"x0", to_json(ltv->x0)}};
  } else {
    const auto& uni = std::get<UnicycleSpec>(s.dynamics);
    json init = json::array();
    for (const auto& x : uni.initial_states) init.push_back(to_json(Vector(x)));
    json jd = {{"type", "unicycle"}, {"initial_states", std::move(init)}, {"W", sequence_to_json(uni.W)}};
    if (!uni.nominal_inputs.empty()) {
      json nom = json::array();
      for (const auto& seq : uni.nominal_inputs) {
        std::vector<Vector> vs(seq.begin(), seq.end());
        nom.push_back(sequence_to_json(vs));
      }
      jd["nominal_inputs"] = std::move(nom);
    }
    root["dynamics"] = std::move(jd);
  }

  json costs = json::array();
  for (const auto& c : s.costs) {
    json jc;
    const bool terminal = c.Q.size() > 1 &&
                          all_equal(std::vector<Matrix>(c.Q.begin(), c.Q.end() - 1)) &&
                          !all_equal(c.Q);
    if (terminal) {
      jc["Q"] = to_json(c.Q.front());
      jc["Q_terminal"] = to_json(c.Q.back());
    } else {
      jc["Q"] = sequence_to_json(c.Q);
    }
    jc["R"] = sequence_to_json(c.R);
    jc["goal"] = sequence_to_json(c.goal);
    costs.push_back(std::move(jc));
  }
  root["costs"] = std::move(costs);

  json cons = json::array();
  for (const auto& spec : s.constraints) {
    json jc;
    if (const auto* box = std::get_if<BoxConstraint>(&spec.kind)) {
      jc = {{"type", "box"}, {"lower", bounds_to_json(box->lower)}, {"upper", bounds_to_json(box->upper)}};
    } else {
      const auto& col = std::get<CollisionConstraint>(spec.kind);
      jc = {{"type", "collision"},
            {"agents", {col.agent_i, col.agent_j}},
            {"radius", col.radius},
            {"C", to_json(col.C)}};
    }
    if (!spec.active_times.empty()) jc["active_times"] = spec.active_times;
    cons.push_back(std::move(jc));
  }
  root["constraints"] = std::move(cons);
  return root.dump(2) + "\n";
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Format, "cannot write " + path.string());
  out << dump_scenario(s);
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Format, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    hex.push_back(kHex[digest[k] >> 4]);
    hex.push_back(kHex[digest[k] & 0xF]);
  }
  return hex;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Format, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_fingerprint(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace ccgame
