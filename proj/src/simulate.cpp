#include "ccgame/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "ccgame/errors.hpp"

namespace ccgame {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, count));
  if (threads == 1) {
    for (int s = 0; s < count; ++s) fn(s);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (count + threads - 1) / threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < threads; ++w) {
    const int begin = w * chunk;
    const int end = std::min(count, begin + chunk);
    pool.emplace_back([&, begin, end] {
      try {
        for (int s = begin; s < end; ++s) fn(s);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double realized_cost(const LqGame& game, const Matrix& states, const Matrix& inputs, int player) {
  const auto& cost = game.costs[player];
  const auto& dyn = game.dynamics;
  int col = 0;
  for (int i = 0; i < player; ++i) col += dyn.input_dim(i);
  const int n_u = dyn.input_dim(player);
  double total = 0.0;
  for (int t = 0; t < game.horizon(); ++t) {
    const Vector u = inputs.row(t).segment(col, n_u).transpose();
    total += u.dot(cost.R[t] * u) + cost.state_cost(t + 1, states.row(t + 1).transpose());
  }
  return total;
}

int total_inputs(const LtvGameDynamics& dyn) {
  int n = 0;
  for (int i = 0; i < dyn.num_players(); ++i) n += dyn.input_dim(i);
  return n;
}

}  // namespace

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t sample)
    : engine_(splitmix64(splitmix64(seed) ^ splitmix64(sample + 0x632BE59BD9B4E019ULL))) {}

Vector NoiseStream::next(int n) {
  Vector z(n);
  for (int k = 0; k < n; ++k) z[k] = next();
  return z;
}

std::vector<Matrix> noise_factors(const LtvGameDynamics& dyn) {
  std::vector<Matrix> factors;
  factors.reserve(dyn.W.size());
  for (std::size_t t = 0; t < dyn.W.size(); ++t) {
    Eigen::LLT<Matrix> llt(dyn.W[t]);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::FactorizationFailure,
                  "noise covariance W[" + std::to_string(t) + "] is not positive definite");
    }
    factors.push_back(llt.matrixL());
  }
  return factors;
}

double RolloutBatch::total_cost(int s) const {
  double c = 0.0;
  for (double v : player_costs[s]) c += v;
  return c;
}

int default_thread_count() {
  if (const char* env = std::getenv("CCGAME_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool trajectory_is_safe(const GameProblem& problem, const Matrix& states) {
  const int n_x = problem.state_dim();
  for (int t = 1; t <= problem.horizon; ++t) {
    const Vector x = states.row(t).transpose() + problem.state_offset[t];
    for (const auto& spec : problem.constraints) {
      if (!spec.active_at(t)) continue;
      if (const auto* box = std::get_if<BoxConstraint>(&spec.kind)) {
        for (int q = 0; q < n_x; ++q) {
          if (box->lower[q] && x[q] < *box->lower[q]) return false;
          if (box->upper[q] && x[q] > *box->upper[q]) return false;
        }
      } else {
        const auto& col = std::get<CollisionConstraint>(spec.kind);
        const Vector d = problem.agent_state(col.agent_i, x) - problem.agent_state(col.agent_j, x);
        if (d.dot(col.C * d) < col.radius * col.radius) return false;
      }
    }
  }
  return true;
}

RolloutBatch rollout(const GameProblem& problem, const FeedbackPolicy& policy, std::uint64_t seed,
                     int samples, const RolloutOptions& options) {
  const auto& game = problem.game;
  const auto& dyn = game.dynamics;
  const int T = game.horizon();
  const int N = game.num_players();
  const int n_x = game.state_dim();
  if (policy.horizon() != T || policy.num_players() != N) {
    throw Error(ErrorKind::DimensionMismatch, "policy does not match the problem dimensions");
  }
  if (samples < 0) throw Error(ErrorKind::InvalidValue, "sample count must be nonnegative");
  const auto factors = noise_factors(dyn);
  const int n_u = total_inputs(dyn);

  RolloutBatch batch;
  batch.samples = samples;
  batch.seed = seed;
  batch.states.resize(samples);
  batch.inputs.resize(samples);
  batch.player_costs.resize(samples);
  batch.safe.resize(samples);

  parallel_for(samples, options.threads, [&](int s) {
    NoiseStream noise(seed, static_cast<std::uint64_t>(s));
    Matrix states(T + 1, n_x);
    Matrix inputs(T, n_u);
    Vector x = dyn.x0;
    states.row(0) = x.transpose();
    for (int t = 0; t < T; ++t) {
      Vector next = dyn.A[t] * x;
      int col = 0;
      for (int i = 0; i < N; ++i) {
        const Vector u = policy.input(t, i, x);
        inputs.row(t).segment(col, u.size()) = u.transpose();
        col += static_cast<int>(u.size());
        next.noalias() += dyn.B[t][i] * u;
      }
      next.noalias() += factors[t] * noise.next(n_x);
      x = std::move(next);
      states.row(t + 1) = x.transpose();
    }
    std::vector<double> costs(N);
    for (int i = 0; i < N; ++i) costs[i] = realized_cost(game, states, inputs, i);
    batch.safe[s] = trajectory_is_safe(problem, states) ? 1 : 0;
    batch.player_costs[s] = std::move(costs);
    batch.states[s] = std::move(states);
    batch.inputs[s] = std::move(inputs);
  });
  return batch;
}

WilsonInterval wilson_interval(int successes, int trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // Clamp so the interval always contains the point estimate despite rounding.
  return {std::clamp(center - half, 0.0, p), std::clamp(center + half, p, 1.0)};
}

TravelTime travel_time(const GameProblem& problem, const Matrix& states, double tolerance) {
  const int T = static_cast<int>(states.rows()) - 1;
  for (int t = 0; t <= T; ++t) {
    const Vector x = states.row(t).transpose() + problem.state_offset[t];
    bool all = true;
    for (int i = 0; i < problem.num_agents() && all; ++i) {
      const Vector xi = problem.agent_state(i, x);
      const auto& idx = problem.agents[i].position_indices;
      double err2 = 0.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double e = xi[idx[k]] - problem.goal_positions[i][static_cast<Eigen::Index>(k)];
        err2 += e * e;
      }
      all = std::sqrt(err2) <= tolerance;
    }
    if (all) return {t * problem.dt, true};
  }
  return {T * problem.dt, false};
}

SafetyStats evaluate_safety(const RolloutBatch& batch, const GameProblem& problem,
                            double goal_tolerance) {
  SafetyStats stats;
  stats.samples = batch.samples;
  double cost_sum = 0.0;
  double travel_sum = 0.0;
  for (int s = 0; s < batch.samples; ++s) {
    if (!trajectory_is_safe(problem, batch.states[s])) ++stats.violations;
    cost_sum += batch.total_cost(s);
    const auto tt = travel_time(problem, batch.states[s], goal_tolerance);
    travel_sum += tt.seconds;
    if (!tt.reached) ++stats.unreached;
  }
  if (batch.samples > 0) {
    const double n = batch.samples;
    stats.collision_rate = stats.violations / n;
    stats.cost_mean = cost_sum / n;
    stats.travel_mean = travel_sum / n;
    double var = 0.0;
    for (int s = 0; s < batch.samples; ++s) {
      const double d = batch.total_cost(s) - stats.cost_mean;
      var += d * d;
    }
    stats.cost_std = batch.samples > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  }
  stats.interval = wilson_interval(stats.violations, stats.samples);
  return stats;
}

MpcResult central_mpc(const GameProblem& problem, const Trajectory& reference_means,
                      std::uint64_t seed, int samples, const MpcOptions& options) {
  const auto& dyn = problem.game.dynamics;
  const int T = problem.horizon;
  const int N = problem.game.num_players();
  const int n_x = problem.state_dim();
  const int n_u = total_inputs(dyn);
  if (options.replan_every < 1) throw Error(ErrorKind::InvalidValue, "replan interval must be >= 1");
  const auto factors = noise_factors(dyn);

  // Rows keep the per-row risk of the full-horizon allocation at every replan.
  const auto full_rows = count_rows(problem);
  double per_row = 0.0;
  if (std::any_of(full_rows.begin(), full_rows.end(), [](int r) { return r > 0; })) {
    per_row = allocate_risk(problem.risk_epsilon, full_rows).per_row;
  }

  MpcResult result;
  result.batch.samples = samples;
  result.batch.seed = seed;
  result.batch.states.resize(samples);
  result.batch.inputs.resize(samples);
  result.batch.player_costs.resize(samples);
  result.batch.safe.resize(samples);
  std::vector<std::vector<MpcFailure>> failures(samples);
  std::vector<double> replan_seconds(samples, 0.0);
  std::vector<int> replan_counts(samples, 0);

  parallel_for(samples, options.threads, [&](int s) {
    NoiseStream noise(seed, static_cast<std::uint64_t>(s));
    Trajectory refs = reference_means;
    Matrix states(T + 1, n_x);
    Matrix inputs(T, n_u);
    Vector x = dyn.x0;
    states.row(0) = x.transpose();
    std::optional<FeedbackPolicy> plan;
    int plan_start = 0;

    for (int t = 0; t < T; ++t) {
      if (t % options.replan_every == 0) {
        const auto start = std::chrono::steady_clock::now();
        try {
          const GameProblem sub = aggregate_players(tail_problem(problem, t, x));
          const auto cov = propagate_covariance(sub.game.dynamics);
          AffineConstraintSet cons(sub.horizon, n_x, {});
          const auto rows = count_rows(sub);
          if (per_row > 0.0 && std::any_of(rows.begin(), rows.end(), [](int r) { return r > 0; })) {
            RiskAllocation risk;
            risk.rows_per_time = rows;
            risk.per_row = per_row;
            risk.epsilon = per_row * risk.total_rows();
            const Trajectory sub_refs(refs.begin() + t, refs.end());
            cons = assemble_constraints(sub, cov, sub_refs, risk);
          }
          auto report = run_dual_ascent(sub.game, cons, options.dual);
          for (int k = 0; k <= sub.horizon; ++k) {
            refs[t + k] = report.mean[k] + sub.state_offset[k];
          }
          plan = std::move(report.policy);
          plan_start = t;
        } catch (const Error& e) {
          failures[s].push_back({s, t, e.what()});
        }
        replan_seconds[s] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ++replan_counts[s];
      }

      Vector u = Vector::Zero(n_u);
      if (plan) u = plan->input(t - plan_start, 0, x);
      inputs.row(t) = u.transpose();
      Vector next = dyn.A[t] * x;
      int col = 0;
      for (int i = 0; i < N; ++i) {
        const auto d = dyn.input_dim(i);
        next.noalias() += dyn.B[t][i] * u.segment(col, d);
        col += d;
      }
      next.noalias() += factors[t] * noise.next(n_x);
      x = std::move(next);
      states.row(t + 1) = x.transpose();
    }

    std::vector<double> costs(N);
    for (int i = 0; i < N; ++i) costs[i] = realized_cost(problem.game, states, inputs, i);
    result.batch.safe[s] = trajectory_is_safe(problem, states) ? 1 : 0;
    result.batch.player_costs[s] = std::move(costs);
    result.batch.states[s] = std::move(states);
    result.batch.inputs[s] = std::move(inputs);
  });

  double seconds = 0.0;
  for (int s = 0; s < samples; ++s) {
    for (auto& f : failures[s]) result.failures.push_back(std::move(f));
    seconds += replan_seconds[s];
    result.replans += replan_counts[s];
  }
  result.mean_replan_seconds = result.replans > 0 ? seconds / result.replans : 0.0;
  return result;
}

}  // namespace ccgame
