#include "ccgame/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ccgame/errors.hpp"
#include "ccgame/linearize.hpp"

namespace ccgame {

bool ConstraintSpec::active_at(int t) const {
  return active_times.empty() ||
         std::find(active_times.begin(), active_times.end(), t) != active_times.end();
}

int Scenario::state_dim() const {
  int n = 0;
  for (const auto& a : agents) n += a.state_dim;
  return n;
}

int Scenario::state_offset(int agent) const {
  int off = 0;
  for (int i = 0; i < agent; ++i) off += agents[i].state_dim;
  return off;
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

namespace {

std::string shape(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

class Checker {
 public:
  void dims(const std::string& field, const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() != rows || m.cols() != cols) {
      add(ErrorKind::DimensionMismatch, field,
          "expected " + shape(rows, cols) + ", found " + shape(m.rows(), m.cols()));
    }
  }
  void length(const std::string& field, std::size_t found, std::size_t expected) {
    if (found != expected) {
      add(ErrorKind::DimensionMismatch, field,
          "expected length " + std::to_string(expected) + ", found " + std::to_string(found));
    }
  }
  bool ok_size(const Matrix& m, Eigen::Index rows, Eigen::Index cols) const {
    return m.rows() == rows && m.cols() == cols;
  }
  void psd(const std::string& field, const Matrix& m, double floor, bool strict) {
    if (!is_symmetric(m)) {
      add(ErrorKind::NotPositiveDefinite, field, "matrix is not symmetric");
      return;
    }
    const double lo = min_eigenvalue(m);
    const bool bad = strict ? lo < floor : lo < -floor;
    if (bad) {
      std::ostringstream os;
      os << "smallest eigenvalue " << lo;
      add(ErrorKind::NotPositiveDefinite, field, os.str(), lo);
    }
  }
  void add(ErrorKind kind, const std::string& field, const std::string& detail,
           double value = 0.0) {
    violations.push_back({kind, field, detail, value});
  }

  std::vector<Violation> violations;
};

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void check_dynamics(Checker& ck, const Scenario& s, const LtvGameDynamics& d) {
  const auto T = static_cast<std::size_t>(s.horizon);
  const int n_x = s.state_dim();
  ck.length("dynamics.A", d.A.size(), T);
  ck.length("dynamics.B", d.B.size(), T);
  ck.length("dynamics.W", d.W.size(), T);
  if (d.x0.size() != n_x) {
    ck.add(ErrorKind::DimensionMismatch, "dynamics.x0",
           "expected length " + std::to_string(n_x) + ", found " + std::to_string(d.x0.size()));
  }
  for (std::size_t t = 0; t < d.A.size(); ++t) ck.dims(idx("dynamics.A", t), d.A[t], n_x, n_x);
  for (std::size_t t = 0; t < d.B.size(); ++t) {
    ck.length(idx("dynamics.B", t), d.B[t].size(), s.agents.size());
    for (std::size_t i = 0; i < d.B[t].size() && i < s.agents.size(); ++i) {
      ck.dims(idx(idx("dynamics.B", t), i), d.B[t][i], n_x, s.agents[i].input_dim);
    }
  }
  for (std::size_t t = 0; t < d.W.size(); ++t) {
    const auto field = idx("dynamics.W", t);
    ck.dims(field, d.W[t], n_x, n_x);
    if (ck.ok_size(d.W[t], n_x, n_x)) ck.psd(field, d.W[t], kTolPd, true);
  }
}

void check_unicycle(Checker& ck, const Scenario& s, const UnicycleSpec& u) {
  const auto T = static_cast<std::size_t>(s.horizon);
  const int n_x = s.state_dim();
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    if (s.agents[i].state_dim != 4 || s.agents[i].input_dim != 2) {
      ck.add(ErrorKind::DimensionMismatch, idx("agents", i),
             "unicycle agents need state_dim 4 and input_dim 2");
    }
  }
  ck.length("dynamics.initial_states", u.initial_states.size(), s.agents.size());
  if (!u.nominal_inputs.empty()) {
    ck.length("dynamics.nominal_inputs", u.nominal_inputs.size(), s.agents.size());
    for (std::size_t i = 0; i < u.nominal_inputs.size(); ++i) {
      ck.length(idx("dynamics.nominal_inputs", i), u.nominal_inputs[i].size(), T);
    }
  }
  if (!(u.dt > 0.0) || std::abs(u.dt - s.dt) > 1e-12) {
    ck.add(ErrorKind::InvalidValue, "dynamics.dt", "unicycle dt must equal scenario dt", u.dt);
  }
  ck.length("dynamics.W", u.W.size(), T);
  for (std::size_t t = 0; t < u.W.size(); ++t) {
    const auto field = idx("dynamics.W", t);
    ck.dims(field, u.W[t], n_x, n_x);
    if (ck.ok_size(u.W[t], n_x, n_x)) ck.psd(field, u.W[t], kTolPd, true);
  }
}

void check_costs(Checker& ck, const Scenario& s) {
  const auto T = static_cast<std::size_t>(s.horizon);
  const int n_x = s.state_dim();
  ck.length("costs", s.costs.size(), s.agents.size());
  for (std::size_t i = 0; i < s.costs.size() && i < s.agents.size(); ++i) {
    const auto& c = s.costs[i];
    const auto base = idx("costs", i);
    const int n_u = s.agents[i].input_dim;
    ck.length(base + ".Q", c.Q.size(), T);
    ck.length(base + ".R", c.R.size(), T);
    ck.length(base + ".goal", c.goal.size(), T);
    for (std::size_t t = 0; t < c.Q.size(); ++t) {
      const auto field = idx(base + ".Q", t);
      ck.dims(field, c.Q[t], n_x, n_x);
      if (ck.ok_size(c.Q[t], n_x, n_x)) ck.psd(field, c.Q[t], kTolPsd, false);
    }
    for (std::size_t t = 0; t < c.R.size(); ++t) {
      const auto field = idx(base + ".R", t);
      ck.dims(field, c.R[t], n_u, n_u);
      if (ck.ok_size(c.R[t], n_u, n_u)) ck.psd(field, c.R[t], kTolPd, true);
    }
    for (std::size_t t = 0; t < c.goal.size(); ++t) {
      if (c.goal[t].size() != n_x) {
        ck.add(ErrorKind::DimensionMismatch, idx(base + ".goal", t),
               "expected length " + std::to_string(n_x));
      }
    }
  }
}

void check_constraints(Checker& ck, const Scenario& s) {
  const int n_x = s.state_dim();
  const int n_agents = s.num_agents();
  for (std::size_t k = 0; k < s.constraints.size(); ++k) {
    const auto& spec = s.constraints[k];
    const auto base = idx("constraints", k);
    for (int t : spec.active_times) {
      if (t < 1 || t > s.horizon) {
        ck.add(ErrorKind::InvalidValue, base + ".active_times",
               "time " + std::to_string(t) + " outside 1..T");
      }
    }
    if (const auto* box = std::get_if<BoxConstraint>(&spec.kind)) {
      ck.length(base + ".lower", box->lower.size(), n_x);
      ck.length(base + ".upper", box->upper.size(), n_x);
      const auto n = std::min(box->lower.size(), box->upper.size());
      for (std::size_t q = 0; q < n; ++q) {
        if (box->lower[q] && box->upper[q] && !(*box->lower[q] < *box->upper[q])) {
          ck.add(ErrorKind::InvalidValue, idx(base + ".lower", q), "lower bound not below upper",
                 *box->lower[q]);
        }
      }
    } else {
      const auto& col = std::get<CollisionConstraint>(spec.kind);
      if (col.agent_i < 0 || col.agent_i >= n_agents || col.agent_j < 0 ||
          col.agent_j >= n_agents || col.agent_i == col.agent_j) {
        ck.add(ErrorKind::InvalidValue, base + ".agents", "need two distinct valid agents");
        continue;
      }
      const int dim = s.agents[col.agent_i].state_dim;
      if (s.agents[col.agent_j].state_dim != dim) {
        ck.add(ErrorKind::DimensionMismatch, base + ".agents",
               "collision pair must have equal state dimensions");
        continue;
      }
      if (!(col.radius > 0.0)) {
        ck.add(ErrorKind::InvalidValue, base + ".radius", "radius must be positive", col.radius);
      }
      ck.dims(base + ".C", col.C, dim, dim);
      if (ck.ok_size(col.C, dim, dim)) ck.psd(base + ".C", col.C, kTolPsd, false);
    }
  }
}

}  // namespace

ValidatedScenario validate_scenario(const Scenario& s) {
  Checker ck;
  if (s.agents.empty()) ck.add(ErrorKind::InvalidValue, "agents", "at least one agent required");
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    if (a.state_dim <= 0 || a.input_dim <= 0) {
      ck.add(ErrorKind::DimensionMismatch, idx("agents", i), "dimensions must be positive");
    }
    for (int p : a.position_indices) {
      if (p < 0 || p >= a.state_dim) {
        ck.add(ErrorKind::InvalidValue, idx("agents", i) + ".position_indices",
               "index outside the agent state");
      }
    }
  }
  if (s.horizon <= 0) ck.add(ErrorKind::InvalidValue, "horizon", "must be positive", s.horizon);
  if (!(s.dt > 0.0)) ck.add(ErrorKind::InvalidValue, "dt", "must be positive", s.dt);
  if (s.duration && std::abs(*s.duration - s.horizon * s.dt) > 1e-9 * std::max(1.0, *s.duration)) {
    ck.add(ErrorKind::InvalidValue, "duration", "horizon * dt differs from declared duration",
           *s.duration);
  }
  if (!(s.risk_epsilon > 0.0 && s.risk_epsilon < 1.0)) {
    ck.add(ErrorKind::BadProbability, "risk_epsilon", "must lie in (0, 1)", s.risk_epsilon);
  }
  // Dimension checks below index by horizon and agents; skip them when those
  // are already broken.
  if (ck.violations.empty()) {
    if (const auto* ltv = std::get_if<LtvGameDynamics>(&s.dynamics)) {
      check_dynamics(ck, s, *ltv);
    } else {
      check_unicycle(ck, s, std::get<UnicycleSpec>(s.dynamics));
    }
    check_costs(ck, s);
    check_constraints(ck, s);
  }
  if (!ck.violations.empty()) throw ValidationError(std::move(ck.violations));
  return ValidatedScenario(s);
}

ValidatedScenario validate_scenario(const ValidatedScenario& s) { return s; }

LtvGameDynamics assemble_dynamics(const ValidatedScenario& vs) {
  const Scenario& s = vs.get();
  if (const auto* ltv = std::get_if<LtvGameDynamics>(&s.dynamics)) return *ltv;
  const auto& uni = std::get<UnicycleSpec>(s.dynamics);
  return linearize_unicycle(uni, nominal_rollout(uni, s.horizon));
}

PlayerCost PlayerCost::from_goals(const std::vector<Matrix>& Q_by_time,
                                  const std::vector<Vector>& goal_by_time,
                                  const std::vector<Matrix>& R_by_time) {
  const auto T = Q_by_time.size();
  const auto n = Q_by_time.front().rows();
  PlayerCost cost;
  cost.Q.reserve(T + 1);
  cost.Q.push_back(Matrix::Zero(n, n));
  cost.q.push_back(Vector::Zero(n));
  cost.c.push_back(0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const Matrix& Q = Q_by_time[t];
    const Vector& r = goal_by_time[t];
    cost.Q.push_back(Q);
    cost.q.push_back(-Q * r);
    cost.c.push_back(r.dot(Q * r));
  }
  cost.R = R_by_time;
  return cost;
}

double PlayerCost::state_cost(int t, const Vector& x) const {
  return x.dot(Q[t] * x) + 2.0 * q[t].dot(x) + c[t];
}

Vector GameProblem::agent_state(int agent, const Vector& shared) const {
  return shared.segment(agent_offsets[agent], agents[agent].state_dim);
}

GameProblem build_problem(const ValidatedScenario& vs) {
  const Scenario& s = vs.get();
  const int T = s.horizon;
  const int n_x = s.state_dim();
  const int N = s.num_agents();

  GameProblem p;
  p.agents = s.agents;
  for (int i = 0; i < N; ++i) p.agent_offsets.push_back(s.state_offset(i));
  p.horizon = T;
  p.dt = s.dt;
  p.risk_epsilon = s.risk_epsilon;
  p.seed = s.seed;
  p.constraints = s.constraints;
  p.game.dynamics = assemble_dynamics(vs);

  p.state_offset.assign(T + 1, Vector::Zero(n_x));
  p.input_offset.assign(T, {});
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) p.input_offset[t].push_back(Vector::Zero(s.agents[i].input_dim));
  }
  if (const auto* uni = std::get_if<UnicycleSpec>(&s.dynamics)) {
    p.unicycle = true;
    const auto nominal = nominal_rollout(*uni, T);
    for (int t = 0; t <= T; ++t) {
      for (int i = 0; i < N; ++i) p.state_offset[t].segment<4>(4 * i) = nominal.states[i][t];
    }
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < N; ++i) p.input_offset[t][i] = nominal.inputs[i][t];
    }
  }

  for (int i = 0; i < N; ++i) {
    const CostSpec& spec = s.costs[i];
    std::vector<Vector> goals;
    goals.reserve(T);
    for (int t = 1; t <= T; ++t) goals.push_back(spec.goal[t - 1] - p.state_offset[t]);
    p.game.costs.push_back(PlayerCost::from_goals(spec.Q, goals, spec.R));

    const Vector goal_block = spec.goal[T - 1].segment(p.agent_offsets[i], s.agents[i].state_dim);
    Vector pos(s.agents[i].position_indices.size());
    for (std::size_t k = 0; k < s.agents[i].position_indices.size(); ++k) {
      pos[k] = goal_block[s.agents[i].position_indices[k]];
    }
    p.goal_positions.push_back(pos);
  }
  return p;
}

GameProblem tail_problem(const GameProblem& p, int start, const Vector& x_start) {
  const int T = p.horizon - start;
  GameProblem out = p;
  out.horizon = T;
  auto& dyn = out.game.dynamics;
  const auto& src = p.game.dynamics;
  dyn.A.assign(src.A.begin() + start, src.A.end());
  dyn.B.assign(src.B.begin() + start, src.B.end());
  dyn.W.assign(src.W.begin() + start, src.W.end());
  dyn.x0 = x_start;
  for (std::size_t i = 0; i < p.game.costs.size(); ++i) {
    const auto& c = p.game.costs[i];
    auto& o = out.game.costs[i];
    o.Q.assign(c.Q.begin() + start, c.Q.end());
    o.q.assign(c.q.begin() + start, c.q.end());
    o.c.assign(c.c.begin() + start, c.c.end());
    o.Q[0].setZero();
    o.q[0].setZero();
    o.c[0] = 0.0;
    o.R.assign(c.R.begin() + start, c.R.end());
  }
  out.state_offset.assign(p.state_offset.begin() + start, p.state_offset.end());
  out.input_offset.assign(p.input_offset.begin() + start, p.input_offset.end());

  out.constraints.clear();
  for (const auto& spec : p.constraints) {
    ConstraintSpec shifted = spec;
    if (!spec.active_times.empty()) {
      shifted.active_times.clear();
      for (int t : spec.active_times) {
        if (t > start) shifted.active_times.push_back(t - start);
      }
      if (shifted.active_times.empty()) continue;
    }
    out.constraints.push_back(std::move(shifted));
  }
  return out;
}

GameProblem aggregate_players(const GameProblem& p) {
  GameProblem out = p;
  const int N = p.game.num_players();
  const int T = p.horizon;
  const int n_x = p.state_dim();
  int n_u = 0;
  for (int i = 0; i < N; ++i) n_u += p.game.dynamics.input_dim(i);

  auto& dyn = out.game.dynamics;
  for (int t = 0; t < T; ++t) {
    Matrix b(n_x, n_u);
    Vector off(n_u);
    int col = 0;
    for (int i = 0; i < N; ++i) {
      const auto& bi = p.game.dynamics.B[t][i];
      b.middleCols(col, bi.cols()) = bi;
      off.segment(col, bi.cols()) = p.input_offset[t][i];
      col += static_cast<int>(bi.cols());
    }
    dyn.B[t] = {b};
    out.input_offset[t] = {off};
  }

  PlayerCost sum;
  for (int t = 0; t <= T; ++t) {
    Matrix Q = Matrix::Zero(n_x, n_x);
    Vector q = Vector::Zero(n_x);
    double c = 0.0;
    for (const auto& pc : p.game.costs) {
      Q += pc.Q[t];
      q += pc.q[t];
      c += pc.c[t];
    }
    sum.Q.push_back(Q);
    sum.q.push_back(q);
    sum.c.push_back(c);
  }
  for (int t = 0; t < T; ++t) {
    Matrix R = Matrix::Zero(n_u, n_u);
    int off = 0;
    for (const auto& pc : p.game.costs) {
      const auto d = pc.R[t].rows();
      R.block(off, off, d, d) = pc.R[t];
      off += static_cast<int>(d);
    }
    sum.R.push_back(R);
  }
  out.game.costs = {sum};
  return out;
}

}  // namespace ccgame
