#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "ccgame/dualascent.hpp"

namespace ccgame {

/// Standard-normal stream that depends only on (seed, sample), so sample s is
/// the same no matter how many samples are drawn or which thread draws it.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t sample);
  double next() { return normal_(engine_); }
  Vector next(int n);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Lower Cholesky factors of W_t; throws FactorizationFailure if one is not PD.
std::vector<Matrix> noise_factors(const LtvGameDynamics& dyn);

struct RolloutBatch {
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<Matrix> states;   // [s], (T+1) x n_x rows, game coordinates
  std::vector<Matrix> inputs;   // [s], T x (sum n_u), deviation inputs by player
  std::vector<std::vector<double>> player_costs;  // [s][player]
  std::vector<char> safe;       // [s] joint event over all times and specs

  double total_cost(int s) const;
};

struct RolloutOptions {
  int threads = 1;
};

/// Number of worker threads from CCGAME_THREADS, else the hardware count.
int default_thread_count();

/// Monte Carlo rollouts of the linear closed loop with sampled noise.
RolloutBatch rollout(const GameProblem& problem, const FeedbackPolicy& policy, std::uint64_t seed,
                     int samples, const RolloutOptions& options = {});

/// True-coordinate predicates of every constraint spec at every active time.
bool trajectory_is_safe(const GameProblem& problem, const Matrix& states);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson_interval(int successes, int trials, double z = 1.959963984540054);

inline constexpr double kGoalTolerance = 0.1;

struct TravelTime {
  double seconds = 0.0;
  bool reached = false;
};

/// First t * dt at which every agent's position is within `tolerance` of its
/// goal; T * dt, flagged unreached, if that never happens.
TravelTime travel_time(const GameProblem& problem, const Matrix& states,
                       double tolerance = kGoalTolerance);

struct SafetyStats {
  int samples = 0;
  int violations = 0;
  double collision_rate = 0.0;
  WilsonInterval interval;
  double cost_mean = 0.0;
  double cost_std = 0.0;
  double travel_mean = 0.0;
  int unreached = 0;
};

/// Recounts violations from the trajectories against the problem's specs.
SafetyStats evaluate_safety(const RolloutBatch& batch, const GameProblem& problem,
                            double goal_tolerance = kGoalTolerance);

struct MpcOptions {
  int replan_every = 1;
  DualAscentOptions dual;
  int threads = 1;
};

struct MpcFailure {
  int sample = 0;
  int step = 0;
  std::string message;
};

struct MpcResult {
  RolloutBatch batch;
  std::vector<MpcFailure> failures;
  double mean_replan_seconds = 0.0;
  int replans = 0;
};

/// Receding-horizon central MPC: all players aggregated into one agent with
/// the summed cost, re-solved over the remaining horizon from the measured
/// state with a fresh covariance schedule. Sample s shares its noise with
/// `rollout` sample s for the same seed.
MpcResult central_mpc(const GameProblem& problem, const Trajectory& reference_means,
                      std::uint64_t seed, int samples, const MpcOptions& options = {});

}  // namespace ccgame
