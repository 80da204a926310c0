#include <gtest/gtest.h>

#include <cmath>

#include "ccgame/errors.hpp"
#include "ccgame/pipeline.hpp"
#include "ccgame/scenario_io.hpp"
#include "ccgame/simulate.hpp"
#include "fixtures.hpp"

using namespace ccgame;
using ccgame::testing::scalar_scenario;
using ccgame::testing::scenario_path;

namespace {

struct Solved {
  GameProblem problem;
  FeedbackPolicy policy;
};

Solved solved_random(std::uint64_t seed, int N, int T) {
  Solved s;
  s.problem = build_problem(validate_scenario(ccgame::testing::random_scenario(seed, N, T)));
  DualAscentOptions o;
  o.max_iterations = 300;
  s.policy = solve_problem(s.problem, o).report.policy;
  return s;
}

}  // namespace

TEST(NoiseStream, DependsOnlyOnSeedAndSample) {
  NoiseStream a(5, 3);
  NoiseStream b(5, 3);
  NoiseStream c(5, 4);
  NoiseStream d(6, 3);
  const Vector va = a.next(8);
  EXPECT_EQ(va, b.next(8));
  EXPECT_NE(va, c.next(8));
  EXPECT_NE(va, d.next(8));
}

TEST(Rollout, VanishingNoiseFollowsTheMean) {
  auto s = solved_random(1, 2, 8);
  for (auto& W : s.problem.game.dynamics.W) W = 1e-30 * Matrix::Identity(W.rows(), W.cols());
  const auto mean = integrate_expected(s.problem.game.dynamics, s.policy);
  const auto batch = rollout(s.problem, s.policy, 3, 4);
  for (int k = 0; k < 4; ++k) {
    for (int t = 0; t <= 8; ++t) {
      EXPECT_LT((batch.states[k].row(t).transpose() - mean[t]).norm(), 1e-12);
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double deterministic = mean_cost(s.problem.game, s.policy, mean, i);
    EXPECT_NEAR(batch.player_costs[0][i], deterministic, 1e-10 * (1.0 + deterministic));
  }
}

TEST(Rollout, SampleIsIndependentOfBatchSize) {
  const auto s = solved_random(2, 2, 6);
  const auto one = rollout(s.problem, s.policy, 99, 1);
  const auto two = rollout(s.problem, s.policy, 99, 2);
  EXPECT_EQ(one.states[0], two.states[0]);
  EXPECT_NE(two.states[0], two.states[1]);
  EXPECT_EQ(one.player_costs[0], two.player_costs[0]);
}

TEST(Rollout, ThreadCountDoesNotChangeResults) {
  const auto s = solved_random(3, 3, 6);
  RolloutOptions serial;
  RolloutOptions parallel;
  parallel.threads = 3;
  const auto a = rollout(s.problem, s.policy, 7, 50, serial);
  const auto b = rollout(s.problem, s.policy, 7, 50, parallel);
  for (int k = 0; k < 50; ++k) {
    EXPECT_EQ(a.states[k], b.states[k]);
    EXPECT_EQ(a.inputs[k], b.inputs[k]);
    EXPECT_EQ(a.safe[k], b.safe[k]);
  }
}

TEST(Rollout, TerminalSpreadMatchesClosedLoopCovariance) {
  const auto s = solved_random(4, 2, 6);
  const int S = 20000;
  const auto batch = rollout(s.problem, s.policy, 11, S);
  const auto mean = integrate_expected(s.problem.game.dynamics, s.policy);
  const Matrix sigma = closed_loop_covariance(s.problem.game.dynamics, s.policy).back();
  const int n = s.problem.state_dim();
  Vector avg = Vector::Zero(n);
  Matrix second = Matrix::Zero(n, n);
  for (int k = 0; k < S; ++k) {
    const Vector x = batch.states[k].row(6).transpose();
    avg += x;
    second += (x - mean[6]) * (x - mean[6]).transpose();
  }
  avg /= S;
  second /= S;
  for (int q = 0; q < n; ++q) {
    const double sd = std::sqrt(sigma(q, q));
    EXPECT_NEAR(avg[q], mean[6][q], 5.0 * sd / std::sqrt(S));
    // Sample variance has relative standard error sqrt(2 / S), about 1%.
    EXPECT_NEAR(second(q, q) / sigma(q, q), 1.0, 0.05);
  }
}

TEST(Rollout, RejectsMismatchedPolicy) {
  const auto s = solved_random(5, 2, 6);
  FeedbackPolicy short_policy = s.policy;
  short_policy.K.pop_back();
  short_policy.alpha.pop_back();
  EXPECT_THROW(rollout(s.problem, short_policy, 1, 1), Error);
}

TEST(Rollout, NonPositiveNoiseFailsFactorization) {
  auto s = solved_random(6, 2, 4);
  s.problem.game.dynamics.W[2] = -Matrix::Identity(4, 4);
  try {
    rollout(s.problem, s.policy, 1, 1);
    FAIL() << "expected FactorizationFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FactorizationFailure);
  }
}

TEST(Wilson, ZeroViolations) {
  const auto w = wilson_interval(0, 10000);
  EXPECT_EQ(w.lo, 0.0);
  const double z2 = 1.959963984540054 * 1.959963984540054;
  EXPECT_NEAR(w.hi, z2 / (10000.0 + z2), 1e-12);
}

TEST(Wilson, InteriorCount) {
  const auto w = wilson_interval(50, 1000);
  EXPECT_NEAR(w.lo, 0.03813, 1e-4);
  EXPECT_NEAR(w.hi, 0.06535, 1e-4);
  const auto all = wilson_interval(10, 10);
  EXPECT_EQ(all.hi, 1.0);
  EXPECT_LT(all.lo, 1.0);
}

TEST(TravelTime, FirstArrivalWithinTolerance) {
  const auto p = build_problem(validate_scenario(scalar_scenario(4, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0, 1.0)));
  Matrix states(5, 1);
  states << 0.0, 0.5, 0.95, 1.2, 1.0;
  const auto tt = travel_time(p, states);
  EXPECT_TRUE(tt.reached);
  EXPECT_DOUBLE_EQ(tt.seconds, 2.0);
  EXPECT_DOUBLE_EQ(travel_time(p, states, 0.01).seconds, 4.0);
  const auto never = travel_time(p, Matrix::Zero(5, 1));
  EXPECT_FALSE(never.reached);
  EXPECT_DOUBLE_EQ(never.seconds, 4.0);
}

TEST(Safety, CountsViolationsFromTrajectories) {
  auto sc = scalar_scenario(2, 1.0, 1.0, 1.0, 1.0, 0.1, 0.0);
  BoxConstraint box;
  box.lower = {std::nullopt};
  box.upper = {1.0};
  ConstraintSpec spec;
  spec.kind = box;
  spec.active_times = {2};
  sc.constraints = {spec};
  const auto p = build_problem(validate_scenario(sc));
  RolloutBatch batch;
  batch.samples = 3;
  Matrix ok(3, 1);
  ok << 0.0, 5.0, 0.5;  // out of bounds at t = 1, which is inactive
  Matrix bad(3, 1);
  bad << 0.0, 0.0, 1.5;
  batch.states = {ok, bad, ok};
  batch.player_costs = {{1.0}, {2.0}, {3.0}};
  const auto stats = evaluate_safety(batch, p);
  EXPECT_EQ(stats.violations, 1);
  EXPECT_NEAR(stats.collision_rate, 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(stats.cost_mean, 2.0);
  EXPECT_DOUBLE_EQ(stats.cost_std, 1.0);
}

TEST(Safety, BundledMiniIsSafeInRollouts) {
  const auto p =
      build_problem(validate_scenario(load_scenario(scenario_path("intersection-mini.json"))));
  DualAscentOptions o;
  o.max_iterations = 500;
  const auto solved = solve_problem(p, o);
  const auto batch = rollout(p, solved.report.policy, 1, 500);
  const auto stats = evaluate_safety(batch, p);
  EXPECT_EQ(stats.violations, 0);
  EXPECT_GT(stats.cost_mean, 0.0);
}

TEST(Mpc, SinglePlayerWithoutConstraintsReproducesFeedback) {
  const auto p = build_problem(validate_scenario(scalar_scenario(6, 1.1, 0.8, 1.0, 0.5, 0.2, 2.0, -1.0)));
  const auto solved = solve_problem(p);
  const auto game = rollout(p, solved.report.policy, 13, 5);
  const auto mpc = central_mpc(p, passive_reference_means(p), 13, 5);
  EXPECT_TRUE(mpc.failures.empty());
  EXPECT_EQ(mpc.replans, 5 * 6);
  for (int k = 0; k < 5; ++k) {
    EXPECT_LT((game.states[k] - mpc.batch.states[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(game.total_cost(k), mpc.batch.total_cost(k), 1e-10);
  }
}

TEST(Mpc, ReplanIntervalReducesSolves) {
  const auto p = build_problem(validate_scenario(scalar_scenario(6, 1.0, 1.0, 1.0, 1.0, 0.1, 1.0)));
  MpcOptions o;
  o.replan_every = 3;
  const auto mpc = central_mpc(p, passive_reference_means(p), 1, 2, o);
  EXPECT_EQ(mpc.replans, 2 * 2);
}
