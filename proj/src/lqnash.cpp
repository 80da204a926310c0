#include "ccgame/lqnash.hpp"

#include <cmath>

#include "ccgame/errors.hpp"

namespace ccgame {

std::vector<Vector> StageGains::solve(const std::vector<Vector>& rhs) const {
  const int n = static_cast<int>(S.rows());
  Vector stacked(n);
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    stacked.segment(input_offsets[i], rhs[i].size()) = rhs[i];
  }
  const Vector sol = factor.solve(stacked);
  std::vector<Vector> out;
  out.reserve(rhs.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    out.push_back(sol.segment(input_offsets[i], rhs[i].size()));
  }
  return out;
}

StageGains solve_stage_gains(std::span<const Matrix> P_next, const Matrix& A,
                             std::span<const Matrix> B, std::span<const Matrix> R, int stage) {
  const int N = static_cast<int>(B.size());
  const auto n_x = A.rows();
  StageGains g;
  int m = 0;
  for (int i = 0; i < N; ++i) {
    g.input_offsets.push_back(m);
    m += static_cast<int>(B[i].cols());
  }

  g.S.resize(m, m);
  Matrix rhs(m, n_x);
  for (int i = 0; i < N; ++i) {
    const Matrix BtP = B[i].transpose() * P_next[i];
    const auto oi = g.input_offsets[i];
    const auto di = B[i].cols();
    for (int j = 0; j < N; ++j) {
      g.S.block(oi, g.input_offsets[j], di, B[j].cols()) = BtP * B[j];
    }
    g.S.block(oi, oi, di, di) += R[i];
    rhs.middleRows(oi, di) = BtP * A;
  }

  g.factor.compute(g.S);
  const auto diag = g.factor.matrixQR().diagonal().cwiseAbs();
  g.rcond = diag.size() == 0 || diag.maxCoeff() == 0.0 ? 0.0 : diag.minCoeff() / diag.maxCoeff();
  if (!(g.rcond >= kSingularRcond)) throw SingularStageSystemError(stage, g.rcond);

  const Matrix K = g.factor.solve(rhs);
  const double residual = (g.S * K - rhs).norm();
  if (!(residual <= 1e-9 * (1.0 + rhs.norm()))) throw SingularStageSystemError(stage, g.rcond);
  for (int i = 0; i < N; ++i) {
    g.K.push_back(K.middleRows(g.input_offsets[i], B[i].cols()));
  }
  return g;
}

GainSchedule compute_gains(const LqGame& game) {
  const auto& dyn = game.dynamics;
  const int T = game.horizon();
  const int N = game.num_players();
  GainSchedule gs;
  gs.stages.resize(T);
  gs.F.resize(T);
  gs.P.assign(T + 1, std::vector<Matrix>(N));
  for (int i = 0; i < N; ++i) gs.P[T][i] = game.costs[i].Q[T];

  std::vector<Matrix> R(N);
  for (int t = T - 1; t >= 0; --t) {
    for (int i = 0; i < N; ++i) R[i] = game.costs[i].R[t];
    gs.stages[t] = solve_stage_gains(gs.P[t + 1], dyn.A[t], dyn.B[t], R, t);
    const auto& K = gs.stages[t].K;
    Matrix F = dyn.A[t];
    for (int j = 0; j < N; ++j) F.noalias() -= dyn.B[t][j] * K[j];
    for (int i = 0; i < N; ++i) {
      Matrix P = F.transpose() * gs.P[t + 1][i] * F + K[i].transpose() * R[i] * K[i] +
                 game.costs[i].Q[t];
      gs.P[t][i] = 0.5 * (P + P.transpose());
    }
    gs.F[t] = std::move(F);
  }
  return gs;
}

NashSolver::NashSolver(const LqGame& game) : game_(game), gains_(compute_gains(game_)) {}

namespace {

// Backward sweep of the affine terms. With V = x'Px + 2 zeta'x, the
// Lagrangian's l_t' x term contributes l_t lambda / 2 to zeta_t, and player i's
// own input cost contributes K^i' R^i alpha^i.
template <typename OnStage>
void affine_sweep(const LqGame& game, const GainSchedule& gs, const AffineConstraintSet& cons,
                  const Vector& lambda, OnStage&& on_stage) {
  const auto& dyn = game.dynamics;
  const int T = game.horizon();
  const int N = game.num_players();
  const int n_x = game.state_dim();
  const bool constrained = !cons.empty() && lambda.size() > 0;

  auto multiplier_term = [&](int t) -> Vector {
    if (!constrained || t < 1) return Vector::Zero(n_x);
    return 0.5 * cons.weighted_sum(t, lambda);
  };

  std::vector<Vector> zeta(N);
  {
    const Vector lt = multiplier_term(T);
    for (int i = 0; i < N; ++i) zeta[i] = game.costs[i].q[T] + lt;
  }
  on_stage(T, std::vector<Vector>{}, zeta);

  std::vector<Vector> rhs(N);
  for (int t = T - 1; t >= 0; --t) {
    const auto& stage = gs.stages[t];
    for (int i = 0; i < N; ++i) rhs[i] = dyn.B[t][i].transpose() * zeta[i];
    std::vector<Vector> alpha = stage.solve(rhs);
    Vector beta = Vector::Zero(n_x);
    for (int j = 0; j < N; ++j) beta.noalias() += dyn.B[t][j] * alpha[j];
    const Vector lt = multiplier_term(t);
    const Matrix& F = gs.F[t];
    for (int i = 0; i < N; ++i) {
      const Vector carried = zeta[i] - gs.P[t + 1][i] * beta;
      zeta[i] = F.transpose() * carried +
                stage.K[i].transpose() * (game.costs[i].R[t] * alpha[i]) + game.costs[i].q[t] + lt;
    }
    on_stage(t, std::move(alpha), zeta);
  }
}

}  // namespace

std::vector<std::vector<Vector>> NashSolver::solve_alpha(const AffineConstraintSet& constraints,
                                                         const Vector& lambda) const {
  std::vector<std::vector<Vector>> alpha(game_.horizon());
  affine_sweep(game_, gains_, constraints, lambda,
               [&](int t, std::vector<Vector>&& a, const std::vector<Vector>&) {
                 if (t < game_.horizon()) alpha[t] = std::move(a);
               });
  return alpha;
}

FeedbackPolicy NashSolver::policy(std::vector<std::vector<Vector>> alpha) const {
  FeedbackPolicy p;
  p.K.reserve(gains_.stages.size());
  for (const auto& s : gains_.stages) p.K.push_back(s.K);
  p.alpha = std::move(alpha);
  return p;
}

NashSolution NashSolver::solve(const AffineConstraintSet& constraints, const Vector& lambda) const {
  const int T = game_.horizon();
  NashSolution sol;
  sol.riccati.P = gains_.P;
  sol.riccati.F = gains_.F;
  sol.riccati.zeta.resize(T + 1);
  std::vector<std::vector<Vector>> alpha(T);
  affine_sweep(game_, gains_, constraints, lambda,
               [&](int t, std::vector<Vector>&& a, const std::vector<Vector>& zeta) {
                 sol.riccati.zeta[t] = zeta;
                 if (t < T) alpha[t] = std::move(a);
               });
  sol.policy = policy(std::move(alpha));
  return sol;
}

NashSolution backward_recursion(const LqGame& game, const AffineConstraintSet& constraints,
                                const Vector& lambda) {
  if (lambda.size() != constraints.size()) {
    throw Error(ErrorKind::DimensionMismatch, "multiplier length differs from constraint count");
  }
  if (lambda.size() > 0 && lambda.minCoeff() < 0.0) {
    throw Error(ErrorKind::InvalidValue, "multipliers must be nonnegative");
  }
  return NashSolver(game).solve(constraints, lambda);
}

Trajectory integrate_expected(const LtvGameDynamics& dyn, const FeedbackPolicy& policy) {
  const int T = dyn.horizon();
  Trajectory x;
  x.reserve(T + 1);
  x.push_back(dyn.x0);
  for (int t = 0; t < T; ++t) {
    Vector next = dyn.A[t] * x.back();
    for (int i = 0; i < dyn.num_players(); ++i) {
      next.noalias() += dyn.B[t][i] * policy.input(t, i, x.back());
    }
    x.push_back(std::move(next));
  }
  return x;
}

std::vector<Matrix> closed_loop_covariance(const LtvGameDynamics& dyn,
                                           const FeedbackPolicy& policy) {
  const int T = dyn.horizon();
  const int n = dyn.state_dim();
  std::vector<Matrix> sigma;
  sigma.reserve(T + 1);
  sigma.push_back(Matrix::Zero(n, n));
  for (int t = 0; t < T; ++t) {
    Matrix F = dyn.A[t];
    for (int j = 0; j < dyn.num_players(); ++j) F.noalias() -= dyn.B[t][j] * policy.K[t][j];
    Matrix next = F * sigma.back() * F.transpose() + dyn.W[t];
    sigma.push_back(0.5 * (next + next.transpose()));
  }
  return sigma;
}

double mean_cost(const LqGame& game, const FeedbackPolicy& policy, const Trajectory& mean,
                 int player) {
  const auto& cost = game.costs[player];
  double total = 0.0;
  for (int t = 0; t < game.horizon(); ++t) {
    const Vector u = policy.input(t, player, mean[t]);
    total += u.dot(cost.R[t] * u) + cost.state_cost(t + 1, mean[t + 1]);
  }
  return total;
}

double noise_cost(const LqGame& game, const FeedbackPolicy& policy, int player) {
  const auto& cost = game.costs[player];
  const auto sigma = closed_loop_covariance(game.dynamics, policy);
  double total = 0.0;
  for (int t = 0; t < game.horizon(); ++t) {
    const Matrix& K = policy.K[t][player];
    total += (cost.R[t] * K * sigma[t] * K.transpose()).trace();
    total += (cost.Q[t + 1] * sigma[t + 1]).trace();
  }
  return total;
}

double evaluate_cost(const LqGame& game, const FeedbackPolicy& policy, int player) {
  const Trajectory mean = integrate_expected(game.dynamics, policy);
  return mean_cost(game, policy, mean, player) + noise_cost(game, policy, player);
}

double evaluate_lagrangian(const LqGame& game, const FeedbackPolicy& policy, int player,
                           const Vector& lambda, const AffineConstraintSet& constraints) {
  const double cost = evaluate_cost(game, policy, player);
  if (constraints.empty()) return cost;
  const Trajectory mean = integrate_expected(game.dynamics, policy);
  return cost + lambda.dot(constraints.evaluate(mean));
}

FeedbackPolicy best_response(const LqGame& game, const FeedbackPolicy& others, int player,
                             const Vector& lambda, const AffineConstraintSet& constraints) {
  const auto& dyn = game.dynamics;
  const auto& cost = game.costs[player];
  const int T = game.horizon();
  const int N = game.num_players();
  const bool constrained = !constraints.empty() && lambda.size() > 0;

  // Player i sees x_{t+1} = Abar x + B u + d with the others' feedback closed.
  // Value V_t(x) = x'Px + 2p'x.
  Matrix P = cost.Q[T];
  Vector p = cost.q[T];
  if (constrained) p += 0.5 * constraints.weighted_sum(T, lambda);

  FeedbackPolicy out = others;
  for (int t = T - 1; t >= 0; --t) {
    Matrix Abar = dyn.A[t];
    Vector d = Vector::Zero(game.state_dim());
    for (int j = 0; j < N; ++j) {
      if (j == player) continue;
      Abar.noalias() -= dyn.B[t][j] * others.K[t][j];
      d.noalias() -= dyn.B[t][j] * others.alpha[t][j];
    }
    const Matrix& B = dyn.B[t][player];
    const Matrix& R = cost.R[t];
    const Matrix H = R + B.transpose() * P * B;
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw SingularStageSystemError(t, 0.0);
    }
    const Matrix K = ldlt.solve(B.transpose() * P * Abar);
    const Vector a = ldlt.solve(B.transpose() * (P * d + p));
    const Matrix Fcl = Abar - B * K;
    const Vector drift = d - B * a;

    Matrix Pn = Fcl.transpose() * P * Fcl + K.transpose() * R * K + cost.Q[t];
    Vector pn = Fcl.transpose() * (P * drift + p) + K.transpose() * (R * a) + cost.q[t];
    if (constrained && t >= 1) pn += 0.5 * constraints.weighted_sum(t, lambda);
    P = 0.5 * (Pn + Pn.transpose());
    p = std::move(pn);
    out.K[t][player] = K;
    out.alpha[t][player] = a;
  }
  return out;
}

}  // namespace ccgame
