#include <gtest/gtest.h>

#include <random>

#include "ccgame/dualascent.hpp"
#include "ccgame/errors.hpp"
#include "ccgame/pipeline.hpp"
#include "ccgame/scenario_io.hpp"
#include "fixtures.hpp"

using namespace ccgame;
using ccgame::testing::scalar_scenario;
using ccgame::testing::scenario_path;

namespace {

struct Instance {
  GameProblem problem;
  AffineConstraintSet cons;
};

Instance random_instance(std::uint64_t seed, int N, int T) {
  Instance in;
  in.problem = build_problem(validate_scenario(ccgame::testing::random_scenario(seed, N, T)));
  in.cons = build_constraints(in.problem, passive_reference_means(in.problem));
  return in;
}

Instance mini() {
  Instance in;
  in.problem =
      build_problem(validate_scenario(load_scenario(scenario_path("intersection-mini.json"))));
  in.cons = build_constraints(in.problem, passive_reference_means(in.problem));
  return in;
}

AffineConstraintSet scalar_row(int T, int time, double coeff, double offset) {
  ConstraintRow row;
  row.time = time;
  row.coeff = Vector::Constant(1, coeff);
  row.offset = offset;
  return AffineConstraintSet(T, 1, {row});
}

}  // namespace

TEST(DualStep, ProjectsOntoNonnegativeOrthant) {
  const Vector lambda = (Vector(3) << 0.5, 0.0, 1.0).finished();
  const Vector g = (Vector(3) << -10.0, 2.0, -1.0).finished();
  const Vector next = dual_step(lambda, 0.1, g);
  EXPECT_EQ(next, (Vector(3) << 0.0, 0.2, 0.9).finished());
  EXPECT_EQ(dual_step(Vector::Zero(2), 1.0, -Vector::Ones(2)), Vector::Zero(2));
}

TEST(AffineMap, EmptyConstraintSet) {
  const auto p = build_problem(validate_scenario(scalar_scenario(3, 1.0, 1.0, 1.0, 1.0, 0.1, 1.0)));
  const auto map = estimate_affine_map(p.game, AffineConstraintSet());
  EXPECT_EQ(map.Lt.size(), 0);
  EXPECT_EQ(map.lipschitz, 0.0);
  const auto report = run_dual_ascent(p.game, AffineConstraintSet());
  EXPECT_EQ(report.termination, Termination::Unconstrained);
  EXPECT_EQ(report.iterations, 0);
  EXPECT_EQ(report.feasibility_residual, 0.0);
}

TEST(AffineMap, ScalarInstanceIsExactlyAffine) {
  const auto p = build_problem(validate_scenario(scalar_scenario(4, 1.0, 1.0, 1.0, 1.0, 0.1, 2.0)));
  const auto cons = scalar_row(4, 2, 1.0, -0.5);
  const NashSolver solver(p.game);
  const auto map = estimate_affine_map(solver, cons);
  ASSERT_EQ(map.Lt.rows(), 1);
  // Raising the multiplier on x_2 <= 0.5 pushes x_2 down.
  EXPECT_LT(map.Lt(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(map.lipschitz, std::abs(map.Lt(0, 0)));
  for (double lam : {0.0, 0.4, 2.7, 10.0}) {
    const Vector l = Vector::Constant(1, lam);
    const Vector g = cons.evaluate(integrate_expected(p.game.dynamics, solver.solve(cons, l).policy));
    EXPECT_NEAR(g[0], map.gradient(l)[0], 1e-12 * (1.0 + std::abs(g[0])));
  }
}

TEST(AffineMap, TwoRowsAtInteriorPoint) {
  const auto in = random_instance(2, 2, 6);
  ASSERT_GE(in.cons.size(), 2);
  const NashSolver solver(in.problem.game);
  const auto map = estimate_affine_map(solver, in.cons);
  Vector lambda = Vector::Zero(in.cons.size());
  lambda[0] = 0.3;
  lambda[1] = 0.7;
  const Vector g =
      in.cons.evaluate(integrate_expected(in.problem.game.dynamics, solver.solve(in.cons, lambda).policy));
  EXPECT_LT((g - map.gradient(lambda)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DualAscent, SlackConstraintsLeaveMultipliersAtZero) {
  const auto p = build_problem(validate_scenario(scalar_scenario(5, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0)));
  const auto cons = scalar_row(5, 3, 1.0, -100.0);
  DualAscentOptions o;
  o.max_iterations = 100;
  const auto r = run_dual_ascent(p.game, cons, o);
  EXPECT_EQ(r.lambda_bar, Vector::Zero(1));
  EXPECT_EQ(r.termination, Termination::Converged);
  EXPECT_EQ(r.iterations, o.patience);
  EXPECT_EQ(r.feasibility_residual, 0.0);
  EXPECT_EQ(r.complementarity, 0.0);
}

TEST(DualAscent, ScalarBindingConstraintConverges) {
  // Goal at 5 but x_3 <= 1: the multiplier must become positive and the
  // averaged iterate approaches the boundary.
  const auto p = build_problem(validate_scenario(scalar_scenario(3, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0, 5.0)));
  const auto cons = scalar_row(3, 3, 1.0, -1.0);
  DualAscentOptions o;
  o.max_iterations = 20000;
  const auto r = run_dual_ascent(p.game, cons, o);
  EXPECT_GT(r.lambda_bar[0], 0.0);
  EXPECT_NEAR(r.mean[3][0], 1.0, 1e-3);
  EXPECT_LE(r.complementarity, 1e-2);
}

TEST(DualAscent, FixedStepSkipsMapEstimate) {
  const auto p = build_problem(validate_scenario(scalar_scenario(3, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0, 5.0)));
  DualAscentOptions o;
  o.step_size = 0.05;
  o.max_iterations = 50;
  const auto r = run_dual_ascent(p.game, scalar_row(3, 3, 1.0, -1.0), o);
  EXPECT_EQ(r.eta, 0.05);
  EXPECT_EQ(r.lipschitz, 0.0);
  o.step_size = -1.0;
  EXPECT_THROW(run_dual_ascent(p.game, scalar_row(3, 3, 1.0, -1.0), o), Error);
}

TEST(DualAscent, ConstantViolatedGradientHasNoStepSize) {
  const auto p = build_problem(validate_scenario(scalar_scenario(3, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0)));
  // A row with no state dependence cannot be fixed by any multiplier.
  ConstraintRow row;
  row.time = 2;
  row.coeff = Vector::Zero(1);
  row.offset = 1.0;
  try {
    run_dual_ascent(p.game, AffineConstraintSet(3, 1, {row}));
    FAIL() << "expected StepSizeUnavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepSizeUnavailable);
  }
}

TEST(DualAscent, MiniAveragedResidualFollowsIterateSum) {
  // For coordinates the projection never touches, the averaged multiplier's
  // constraint value is (lambda_{k+1} - lambda_1) / (k eta) because g is affine.
  const auto in = mini();
  DualAscentOptions o;
  o.max_iterations = 2000;
  o.tol_feas = 0.0;
  o.record_iterates = true;
  const auto r = run_dual_ascent(in.problem.game, in.cons, o);
  ASSERT_EQ(r.iterations, 2000);
  const int M = in.cons.size();
  std::vector<char> projected(M, 0);
  for (const auto& rec : r.trace) {
    const Vector raw = rec.lambda + r.eta * rec.g;
    for (int m = 0; m < M; ++m) projected[m] |= raw[m] < 0.0;
  }
  const Vector next = dual_step(r.trace.back().lambda, r.eta, r.trace.back().g);
  const double k = r.iterations;
  int checked = 0;
  for (int m = 0; m < M; ++m) {
    if (projected[m]) continue;
    ++checked;
    EXPECT_NEAR(r.g[m], next[m] / (k * r.eta), 1e-9 * (1.0 + std::abs(r.g[m])));
  }
  EXPECT_GT(checked, 0);
  // The last iterate is essentially feasible while the average lags by O(1/k).
  EXPECT_LT(r.trace.back().max_violation, 1e-9);
  EXPECT_GT(r.feasibility_residual, 1e-3);
  EXPECT_LT(r.feasibility_residual, 0.1);
}

TEST(DualAscent, CheckpointsRecordAverages) {
  const auto in = random_instance(3, 2, 5);
  DualAscentOptions o;
  o.max_iterations = 30;
  o.tol_feas = 0.0;
  o.record_iterates = true;
  o.checkpoints = {10, 30};
  const auto r = run_dual_ascent(in.problem.game, in.cons, o);
  ASSERT_EQ(r.checkpoints.size(), 2u);
  Vector sum = Vector::Zero(in.cons.size());
  for (int l = 0; l < 10; ++l) sum += r.trace[l].lambda;
  EXPECT_TRUE((r.checkpoints[0].second - sum / 10.0).norm() < 1e-14);
  EXPECT_TRUE((r.checkpoints[1].second - r.lambda_bar).norm() < 1e-14);
}

TEST(PartialDual, GradientMatchesConstraintValues) {
  for (std::uint64_t seed : {41u, 42u}) {
    const auto in = random_instance(seed, 3, 6);
    const NashSolver solver(in.problem.game);
    const int M = in.cons.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Vector ref(M);
    for (int m = 0; m < M; ++m) ref[m] = u(rng);
    const Vector g = in.cons.evaluate(
        integrate_expected(in.problem.game.dynamics, solver.solve(in.cons, ref).policy));
    const double delta = 1e-4;
    for (int i = 0; i < 3; ++i) {
      for (int m = 0; m < M; ++m) {
        Vector plus = ref;
        Vector minus = ref;
        plus[m] += delta;
        minus[m] -= delta;
        const double fd = (partial_dual_function(solver, in.cons, plus, ref, i) -
                           partial_dual_function(solver, in.cons, minus, ref, i)) /
                          (2.0 * delta);
        EXPECT_NEAR(fd, g[m], 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()))
            << "seed " << seed << " player " << i << " row " << m;
      }
    }
  }
}

TEST(PartialDual, IsConcaveAlongLines) {
  const auto in = random_instance(43, 2, 6);
  const NashSolver solver(in.problem.game);
  const int M = in.cons.size();
  const Vector ref = Vector::Constant(M, 0.5);
  const Vector dir = Vector::LinSpaced(M, -1.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    for (double s = -0.4; s <= 0.4; s += 0.2) {
      const double h = 0.1;
      const double f0 = partial_dual_function(solver, in.cons, ref + (s - h) * dir, ref, i);
      const double f1 = partial_dual_function(solver, in.cons, ref + s * dir, ref, i);
      const double f2 = partial_dual_function(solver, in.cons, ref + (s + h) * dir, ref, i);
      EXPECT_LE(f0 + f2 - 2.0 * f1, 1e-9 * (1.0 + std::abs(f1)));
    }
  }
}

TEST(TotalDual, SinglePlayerGradientIsConstraintValue) {
  const auto in = random_instance(44, 1, 8);
  const NashSolver solver(in.problem.game);
  const int M = in.cons.size();
  ASSERT_GT(M, 0);
  const Vector lambda = Vector::Constant(M, 0.3);
  const Vector g = in.cons.evaluate(
      integrate_expected(in.problem.game.dynamics, solver.solve(in.cons, lambda).policy));
  for (int m = 0; m < M; ++m) {
    Vector plus = lambda;
    Vector minus = lambda;
    plus[m] += 1e-4;
    minus[m] -= 1e-4;
    const double fd = (dual_function(solver, in.cons, plus, 0) -
                       dual_function(solver, in.cons, minus, 0)) / 2e-4;
    EXPECT_NEAR(fd, g[m], 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
}
