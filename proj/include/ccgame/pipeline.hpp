#pragma once

#include "ccgame/dualascent.hpp"

namespace ccgame {

/// Means of the uncontrolled system (all inputs zero) in true coordinates.
Trajectory passive_reference_means(const GameProblem& problem);

/// Covariance schedule, uniform risk allocation and affine rows for a
/// problem, with collision directions taken from `reference_means`.
AffineConstraintSet build_constraints(const GameProblem& problem, const Trajectory& reference_means);

struct SolveOutcome {
  AffineConstraintSet constraints;
  DualSolveReport report;
  /// Mean trajectory of the returned solution, true coordinates.
  Trajectory reference_means;
  int relinearizations = 0;
};

/// Dual ascent on the problem. Each relinearization pass rebuilds the
/// collision rows around the previous solution's mean and solves again.
SolveOutcome solve_problem(const GameProblem& problem, const DualAscentOptions& options = {},
                           int relinearize = 0);

}  // namespace ccgame
