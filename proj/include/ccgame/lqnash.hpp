#pragma once

#include <span>

#include "ccgame/model.hpp"
#include "ccgame/uncertainty.hpp"

namespace ccgame {

/// u_t^i = -K_t^i x_t - alpha_t^i for t = 0..T-1.
struct FeedbackPolicy {
  std::vector<std::vector<Matrix>> K;      // [t][player]
  std::vector<std::vector<Vector>> alpha;  // [t][player]

  int horizon() const { return static_cast<int>(K.size()); }
  int num_players() const { return K.empty() ? 0 : static_cast<int>(K.front().size()); }
  Vector input(int t, int player, const Vector& x) const {
    return -K[t][player] * x - alpha[t][player];
  }
};

/// Value function of player i at time t: x' P x + 2 zeta' x + const.
struct RiccatiState {
  std::vector<std::vector<Matrix>> P;     // [t][player], t = 0..T
  std::vector<std::vector<Vector>> zeta;  // [t][player], t = 0..T
  std::vector<Matrix> F;                  // [t] closed loop A_t - sum_j B_t^j K_t^j
};

inline constexpr double kSingularRcond = 1e-12;

/// Per-stage joint Nash system S [K^1; ...; K^N] = [B^1' P^1 A; ...; B^N' P^N A]
/// with S_ii = R^i + B^i' P^i B^i and S_ij = B^i' P^i B^j. The factorization is
/// kept because the affine terms solve against the same S.
struct StageGains {
  std::vector<Matrix> K;
  Matrix S;
  Eigen::ColPivHouseholderQR<Matrix> factor;
  double rcond = 0.0;
  std::vector<int> input_offsets;

  /// Solves S [a^1; ...; a^N] = [rhs^1; ...; rhs^N].
  std::vector<Vector> solve(const std::vector<Vector>& rhs) const;
};

/// Throws SingularStageSystemError when the rcond estimate is below kSingularRcond.
StageGains solve_stage_gains(std::span<const Matrix> P_next, const Matrix& A,
                             std::span<const Matrix> B, std::span<const Matrix> R, int stage = -1);

/// The lambda-independent half of the recursion: gains K, value matrices P,
/// closed loops F and the stage factorizations.
struct GainSchedule {
  std::vector<StageGains> stages;          // [t]
  std::vector<std::vector<Matrix>> P;      // [t][player], t = 0..T
  std::vector<Matrix> F;                   // [t]
};

GainSchedule compute_gains(const LqGame& game);

struct NashSolution {
  FeedbackPolicy policy;
  RiccatiState riccati;
};

/// Feedback Nash equilibrium of the game whose player-i cost is
/// J^i + lambda' (l' x + c), by the coupled Riccati recursion.
NashSolution backward_recursion(const LqGame& game, const AffineConstraintSet& constraints,
                                const Vector& lambda);

/// Caches the gain schedule so repeated solves for different multipliers only
/// redo the affine (alpha, zeta) sweep.
class NashSolver {
 public:
  explicit NashSolver(const LqGame& game);

  const LqGame& game() const { return game_; }
  const GainSchedule& gains() const { return gains_; }

  NashSolution solve(const AffineConstraintSet& constraints, const Vector& lambda) const;
  /// Only the affine terms alpha[t][player].
  std::vector<std::vector<Vector>> solve_alpha(const AffineConstraintSet& constraints,
                                               const Vector& lambda) const;
  FeedbackPolicy policy(std::vector<std::vector<Vector>> alpha) const;

 private:
  LqGame game_;
  GainSchedule gains_;
};

/// Mean trajectory x_0..x_T of the closed loop with w = 0.
Trajectory integrate_expected(const LtvGameDynamics& dyn, const FeedbackPolicy& policy);

/// Closed-loop covariances Sigma_0 = 0, Sigma_{t+1} = F_t Sigma_t F_t' + W_t.
std::vector<Matrix> closed_loop_covariance(const LtvGameDynamics& dyn,
                                           const FeedbackPolicy& policy);

/// Deterministic part of J^i along a mean trajectory.
double mean_cost(const LqGame& game, const FeedbackPolicy& policy, const Trajectory& mean,
                 int player);
/// The trace part of J^i; depends only on the gains.
double noise_cost(const LqGame& game, const FeedbackPolicy& policy, int player);

/// Exact expected cost J^i of the policy under the Gaussian closed loop.
double evaluate_cost(const LqGame& game, const FeedbackPolicy& policy, int player);

/// L^i = J^i + lambda' g(x).
double evaluate_lagrangian(const LqGame& game, const FeedbackPolicy& policy, int player,
                           const Vector& lambda, const AffineConstraintSet& constraints);

/// Player i's optimal feedback policy against the others' fixed policies for
/// the Lagrangian with multiplier lambda. Returns the joint policy with player
/// i's entries replaced.
FeedbackPolicy best_response(const LqGame& game, const FeedbackPolicy& others, int player,
                             const Vector& lambda, const AffineConstraintSet& constraints);

}  // namespace ccgame
