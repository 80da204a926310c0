#include "ccgame/dualascent.hpp"

#include <algorithm>
#include <cmath>

#include "ccgame/errors.hpp"

namespace ccgame {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Unconstrained: return "unconstrained";
  }
  return "unknown";
}

namespace {

Vector constraint_values(const NashSolver& solver, const AffineConstraintSet& cons,
                         const Vector& lambda) {
  const auto policy = solver.policy(solver.solve_alpha(cons, lambda));
  return cons.evaluate(integrate_expected(solver.game().dynamics, policy));
}

double max_violation(const Vector& g) { return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff()); }

}  // namespace

AffineGradientMap estimate_affine_map(const NashSolver& solver, const AffineConstraintSet& cons) {
  const int M = cons.size();
  AffineGradientMap map;
  map.Lt = Matrix::Zero(M, M);
  map.ct = constraint_values(solver, cons, Vector::Zero(M));
  if (M == 0) return map;

  Matrix LtT(M, M);
  Vector unit = Vector::Zero(M);
  for (int m = 0; m < M; ++m) {
    unit[m] = 1.0;
    LtT.col(m) = constraint_values(solver, cons, unit) - map.ct;
    unit[m] = 0.0;
  }
  map.Lt = LtT.transpose();
  Eigen::BDCSVD<Matrix> svd(map.Lt);
  map.lipschitz = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return map;
}

AffineGradientMap estimate_affine_map(const LqGame& game, const AffineConstraintSet& cons) {
  return estimate_affine_map(NashSolver(game), cons);
}

Vector dual_step(const Vector& lambda, double eta, const Vector& g) {
  return (lambda + eta * g).cwiseMax(0.0);
}

DualSolveReport run_dual_ascent(const LqGame& game, const AffineConstraintSet& cons,
                                const DualAscentOptions& options) {
  const NashSolver solver(game);
  const int M = cons.size();
  DualSolveReport report;

  auto finish = [&](const Vector& lambda_bar) {
    report.lambda_bar = lambda_bar;
    report.policy = solver.solve(cons, lambda_bar).policy;
    report.mean = integrate_expected(game.dynamics, report.policy);
    report.g = cons.evaluate(report.mean);
    report.feasibility_residual = max_violation(report.g);
    report.complementarity = M == 0 ? 0.0 : std::abs(lambda_bar.dot(report.g));
    for (int i = 0; i < game.num_players(); ++i) {
      report.player_costs.push_back(evaluate_cost(game, report.policy, i));
    }
  };

  if (M == 0) {
    report.termination = Termination::Unconstrained;
    finish(Vector::Zero(0));
    return report;
  }

  std::optional<AffineGradientMap> map;
  if (options.step_size) {
    if (!(*options.step_size > 0.0)) {
      throw Error(ErrorKind::InvalidValue, "step size must be positive");
    }
    report.eta = *options.step_size;
  } else {
    map = estimate_affine_map(solver, cons);
    report.lipschitz = map->lipschitz;
    if (map->lipschitz > 0.0) {
      report.eta = options.step_fraction / map->lipschitz;
    } else if (map->ct.maxCoeff() > 0.0) {
      throw Error(ErrorKind::StepSizeUnavailable,
                  "dual gradient is constant and some constraint is violated; multipliers "
                  "cannot move the equilibrium");
    } else {
      report.eta = 1.0;
    }
  }
  if (options.max_iterations < 1) throw Error(ErrorKind::InvalidValue, "need at least one iteration");

  // Only player 1's dual value is traced; its noise part is fixed by the gains.
  const FeedbackPolicy gains_only = solver.policy(solver.solve_alpha(cons, Vector::Zero(M)));
  const double noise_p1 = noise_cost(game, gains_only, 0);

  Vector lambda = Vector::Zero(M);
  Vector sum = Vector::Zero(M);
  int streak = 0;
  int k = 0;
  std::vector<int> checkpoints = options.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  auto checkpoint = checkpoints.begin();

  report.termination = Termination::MaxIterations;
  while (k < options.max_iterations) {
    ++k;
    const FeedbackPolicy policy = solver.policy(solver.solve_alpha(cons, lambda));
    const Trajectory mean = integrate_expected(game.dynamics, policy);
    const Vector g = cons.evaluate(mean);
    sum += lambda;

    IterationRecord rec;
    rec.iteration = k;
    rec.max_violation = max_violation(g);
    rec.complementarity = std::abs(lambda.dot(g));
    rec.dual_value = mean_cost(game, policy, mean, 0) + noise_p1 + lambda.dot(g);
    if (options.record_iterates) {
      rec.lambda = lambda;
      rec.g = g;
    }
    report.trace.push_back(std::move(rec));

    while (checkpoint != checkpoints.end() && *checkpoint == k) {
      report.checkpoints.emplace_back(k, sum / k);
      ++checkpoint;
    }

    // Early exit is judged on the averaged multiplier, which is what gets returned.
    const Vector lambda_bar = sum / k;
    const Vector g_bar = map ? map->gradient(lambda_bar) : constraint_values(solver, cons, lambda_bar);
    const bool ok = max_violation(g_bar) <= options.tol_feas &&
                    std::abs(lambda_bar.dot(g_bar)) <= options.tol_slack;
    streak = ok ? streak + 1 : 0;
    if (streak >= options.patience) {
      report.termination = Termination::Converged;
      break;
    }
    lambda = dual_step(lambda, report.eta, g);
  }
  report.iterations = k;
  finish(sum / k);
  if (report.termination == Termination::MaxIterations && report.within_tolerance(options)) {
    report.termination = Termination::Converged;
  }
  return report;
}

double dual_function(const NashSolver& solver, const AffineConstraintSet& cons,
                     const Vector& lambda, int player) {
  const auto sol = solver.solve(cons, lambda);
  return evaluate_lagrangian(solver.game(), sol.policy, player, lambda, cons);
}

double partial_dual_function(const NashSolver& solver, const AffineConstraintSet& cons,
                             const Vector& lambda, const Vector& reference, int player) {
  const auto ref = solver.solve(cons, reference);
  const auto br = best_response(solver.game(), ref.policy, player, lambda, cons);
  return evaluate_lagrangian(solver.game(), br, player, lambda, cons);
}

}  // namespace ccgame
