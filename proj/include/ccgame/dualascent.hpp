#pragma once

#include <optional>
#include <string>

#include "ccgame/lqnash.hpp"

namespace ccgame {

/// g(x_lambda) = Lt' lambda + ct, exact because the NE mean trajectory is
/// affine in the multipliers.
struct AffineGradientMap {
  Matrix Lt;       // M x M
  Vector ct;       // M
  double lipschitz = 0.0;  // largest singular value of Lt

  Vector gradient(const Vector& lambda) const { return Lt.transpose() * lambda + ct; }
};

/// M + 1 NE solves: one at lambda = 0 and one per unit vector.
AffineGradientMap estimate_affine_map(const NashSolver& solver, const AffineConstraintSet& cons);
AffineGradientMap estimate_affine_map(const LqGame& game, const AffineConstraintSet& cons);

/// Projected ascent step max(0, lambda + eta g).
Vector dual_step(const Vector& lambda, double eta, const Vector& g);

struct DualAscentOptions {
  int max_iterations = 2000;
  /// Fixed step size; unset means eta = step_fraction / L.
  std::optional<double> step_size;
  double step_fraction = 0.5;
  double tol_feas = 1e-6;
  double tol_slack = 1e-6;
  int patience = 10;
  /// Keep lambda_(l) and g(x_(l)) for every iterate.
  bool record_iterates = false;
  /// Record the averaged multiplier after these iteration counts.
  std::vector<int> checkpoints;
};

struct IterationRecord {
  int iteration = 0;
  double max_violation = 0.0;
  double complementarity = 0.0;
  double dual_value = 0.0;  // player 1's D(lambda_(l))
  Vector lambda;
  Vector g;
};

enum class Termination { Converged, MaxIterations, Unconstrained };
std::string to_string(Termination t);

struct DualSolveReport {
  Vector lambda_bar;
  FeedbackPolicy policy;
  Trajectory mean;
  Vector g;  // g(x) at lambda_bar
  double feasibility_residual = 0.0;
  double complementarity = 0.0;
  double eta = 0.0;
  double lipschitz = 0.0;
  int iterations = 0;
  Termination termination = Termination::MaxIterations;
  std::vector<IterationRecord> trace;
  std::vector<std::pair<int, Vector>> checkpoints;
  std::vector<double> player_costs;

  bool within_tolerance(const DualAscentOptions& o) const {
    return feasibility_residual <= o.tol_feas && complementarity <= o.tol_slack;
  }
};

/// Projected dual ascent over the multiplier-parameterized NE solves starting
/// from lambda = 0, returning the NE at the averaged multiplier.
DualSolveReport run_dual_ascent(const LqGame& game, const AffineConstraintSet& cons,
                                const DualAscentOptions& options = {});

/// D^i(lambda): player i's Lagrangian at the NE for lambda.
double dual_function(const NashSolver& solver, const AffineConstraintSet& cons,
                     const Vector& lambda, int player);

/// D^i(lambda; gamma^{-i}_ref): player i's best-response Lagrangian at
/// `lambda` while the other players keep their NE policies for `reference`.
/// Its gradient in `lambda` at lambda = reference is g(x_reference).
double partial_dual_function(const NashSolver& solver, const AffineConstraintSet& cons,
                             const Vector& lambda, const Vector& reference, int player);

}  // namespace ccgame
