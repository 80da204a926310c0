#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ccgame/model.hpp"

namespace ccgame::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(CCGAME_SCENARIO_DIR) + "/" + name;
}

/// One scalar agent, x_{t+1} = a x_t + b u_t + w_t, cost q x^2 + r u^2 toward goal.
inline Scenario scalar_scenario(int T, double a, double b, double q, double r, double w,
                                double x0, double goal = 0.0) {
  Scenario s;
  s.agents = {{"p", 1, 1, {0}}};
  s.horizon = T;
  s.dt = 1.0;
  LtvGameDynamics d;
  d.A.assign(T, Matrix::Constant(1, 1, a));
  d.B.assign(T, {Matrix::Constant(1, 1, b)});
  d.W.assign(T, Matrix::Constant(1, 1, w));
  d.x0 = Vector::Constant(1, x0);
  s.dynamics = d;
  CostSpec c;
  c.Q.assign(T, Matrix::Constant(1, 1, q));
  c.R.assign(T, Matrix::Constant(1, 1, r));
  c.goal.assign(T, Vector::Constant(1, goal));
  s.costs = {c};
  return s;
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
  }
  return m;
}

inline Matrix random_spd(std::mt19937_64& rng, int n, double floor, double scale) {
  const Matrix g = random_matrix(rng, n, n, scale);
  return g * g.transpose() + floor * Matrix::Identity(n, n);
}

/// Random LTV game: N agents with 2-dimensional states, player i acting only
/// on its own block, pairwise collision rows and per-agent upper bounds at a
/// few times. Rows stay at or below 20 for N <= 3.
inline Scenario random_scenario(std::uint64_t seed, int N, int T) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int d = 2;
  const int n_x = N * d;
  Scenario s;
  s.horizon = T;
  s.dt = 0.1;
  s.risk_epsilon = 0.05;
  s.seed = seed;
  for (int i = 0; i < N; ++i) {
    s.agents.push_back({"a" + std::to_string(i), d, 1 + (i % 2), {0, 1}});
  }
  LtvGameDynamics dyn;
  for (int t = 0; t < T; ++t) {
    Matrix A = Matrix::Zero(n_x, n_x);
    std::vector<Matrix> B;
    for (int i = 0; i < N; ++i) {
      A.block(d * i, d * i, d, d) =
          Matrix::Identity(d, d) + random_matrix(rng, d, d, 0.1);
      Matrix Bi = Matrix::Zero(n_x, s.agents[i].input_dim);
      Bi.middleRows(d * i, d) = random_matrix(rng, d, s.agents[i].input_dim, 0.5);
      B.push_back(Bi);
    }
    dyn.A.push_back(A);
    dyn.B.push_back(B);
    dyn.W.push_back(random_spd(rng, n_x, 1e-4, 0.02));
  }
  dyn.x0 = Vector::Zero(n_x);
  for (int i = 0; i < N; ++i) {
    dyn.x0[d * i] = 3.0 * i + 0.3 * u(rng);
    dyn.x0[d * i + 1] = -1.5 * i + 0.3 * u(rng);
  }
  s.dynamics = dyn;

  for (int i = 0; i < N; ++i) {
    CostSpec c;
    Matrix Qi = Matrix::Zero(n_x, n_x);
    Qi.block(d * i, d * i, d, d) = random_spd(rng, d, 0.1, 0.5);
    c.Q.assign(T, 0.2 * Qi);
    c.Q.back() = 2.0 * Qi;
    c.R.assign(T, random_spd(rng, s.agents[i].input_dim, 0.5, 0.3));
    Vector goal = dyn.x0;
    goal[d * i] += 2.0 + u(rng);
    goal[d * i + 1] += 1.0 + u(rng);
    c.goal.assign(T, goal);
    s.costs.push_back(c);
  }

  std::uniform_int_distribution<int> when(1, T);
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      ConstraintSpec spec;
      spec.kind = CollisionConstraint{i, j, 1.0, Matrix::Identity(d, d)};
      spec.active_times = {when(rng), when(rng), when(rng)};
      std::sort(spec.active_times.begin(), spec.active_times.end());
      spec.active_times.erase(std::unique(spec.active_times.begin(), spec.active_times.end()),
                              spec.active_times.end());
      s.constraints.push_back(spec);
    }
    BoxConstraint box;
    box.lower.resize(n_x);
    box.upper.resize(n_x);
    box.upper[d * i] = dyn.x0[d * i] + 1.0 + 0.5 * u(rng);
    ConstraintSpec spec;
    spec.kind = box;
    spec.active_times = {T / 2 + 1, T};
    s.constraints.push_back(spec);
  }
  return s;
}

}  // namespace ccgame::testing
