#include "ccgame/pipeline.hpp"

#include <algorithm>

namespace ccgame {

Trajectory passive_reference_means(const GameProblem& problem) {
  const auto& dyn = problem.game.dynamics;
  Trajectory means;
  means.reserve(problem.horizon + 1);
  Vector x = dyn.x0;
  means.push_back(x + problem.state_offset[0]);
  for (int t = 0; t < problem.horizon; ++t) {
    x = dyn.A[t] * x;
    means.push_back(x + problem.state_offset[t + 1]);
  }
  return means;
}

AffineConstraintSet build_constraints(const GameProblem& problem, const Trajectory& reference_means) {
  const auto rows = count_rows(problem);
  if (std::all_of(rows.begin(), rows.end(), [](int r) { return r == 0; })) {
    return AffineConstraintSet(problem.horizon, problem.state_dim(), {});
  }
  const auto cov = propagate_covariance(problem.game.dynamics);
  return assemble_constraints(problem, cov, reference_means,
                              allocate_risk(problem.risk_epsilon, rows));
}

SolveOutcome solve_problem(const GameProblem& problem, const DualAscentOptions& options,
                           int relinearize) {
  SolveOutcome out;
  Trajectory refs = passive_reference_means(problem);
  for (int pass = 0; pass <= relinearize; ++pass) {
    out.constraints = build_constraints(problem, refs);
    out.report = run_dual_ascent(problem.game, out.constraints, options);
    refs.clear();
    for (int t = 0; t <= problem.horizon; ++t) {
      refs.push_back(out.report.mean[t] + problem.state_offset[t]);
    }
    out.relinearizations = pass;
  }
  out.reference_means = std::move(refs);
  return out;
}

}  // namespace ccgame
