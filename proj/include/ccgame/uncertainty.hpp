#pragma once

#include <span>

#include "ccgame/model.hpp"

namespace ccgame {

/// Open-loop state covariance Sigma_0..Sigma_T with Sigma_0 = 0.
struct CovarianceSchedule {
  std::vector<Matrix> sigma;

  /// Covariance of x^i - x^j at time t for agents occupying the given blocks.
  Matrix difference_covariance(int t, int offset_i, int offset_j, int dim) const;
};

CovarianceSchedule propagate_covariance(const LtvGameDynamics& dyn);
CovarianceSchedule propagate_covariance(std::span<const Matrix> A, std::span<const Matrix> W);

/// Uniform split of the joint risk budget over every emitted constraint row.
struct RiskAllocation {
  double epsilon = 0.0;
  std::vector<int> rows_per_time;  // [t-1], t = 1..T
  double per_row = 0.0;

  int total_rows() const;
  double at(int t, int k) const;
  double sum() const;
};

inline constexpr double kMinRowRisk = 1e-12;

/// Throws AllocationTooSmall when epsilon / rows drops below kMinRowRisk.
RiskAllocation allocate_risk(double epsilon, std::span<const int> rows_per_time);
RiskAllocation allocate_risk(double epsilon, int rows_per_step, int horizon);

/// Standard normal CDF.
double normal_cdf(double z);
/// Standard normal quantile on (1e-12, 1 - 1e-12); throws DomainError outside.
double inverse_normal_cdf(double p);

enum class RowKind { Box, Collision };

struct RowInfo {
  RowKind kind = RowKind::Box;
  int source = -1;        // index into the constraint specs
  int agent_i = -1;
  int agent_j = -1;
  int coordinate = -1;    // box rows: shared-state coordinate
  bool upper = false;     // box rows: upper (true) or lower (false) side
  Vector reference_direction;  // collision rows: dbar with ||dbar||_C = R
  double risk = 0.0;
  double backoff = 0.0;
};

/// One affine row l' x_t + c <= 0 on the state at a single time t.
struct ConstraintRow {
  int time = 0;
  Vector coeff;
  double offset = 0.0;
  RowInfo info;
};

/// g(x) = l' x + c over times 1..T. Rows are ordered by time, then by source.
class AffineConstraintSet {
 public:
  AffineConstraintSet() = default;
  AffineConstraintSet(int horizon, int state_dim, std::vector<ConstraintRow> rows);

  int size() const { return static_cast<int>(rows_.size()); }
  bool empty() const { return rows_.empty(); }
  int horizon() const { return horizon_; }
  int state_dim() const { return state_dim_; }
  const std::vector<ConstraintRow>& rows() const { return rows_; }
  /// Row indices [begin, end) emitted at time t.
  std::pair<int, int> rows_at(int t) const;

  /// Dense l (T n_x x M); column m is supported on its time block.
  Matrix dense_l() const;
  Vector offsets() const;
  /// g over the trajectory x_0..x_T (x_0 is never constrained).
  Vector evaluate(const Trajectory& x) const;
  /// l_t * lambda, an n_x vector.
  Vector weighted_sum(int t, const Vector& lambda) const;

 private:
  int horizon_ = 0;
  int state_dim_ = 0;
  std::vector<ConstraintRow> rows_;
  std::vector<int> time_begin_;
};

/// Radial reference dbar = R * delta / ||delta||_C. Throws DegenerateReference
/// when ||delta||_C < 1e-9 (agents and time are only used for the message).
Vector reference_direction(const Vector& delta, const Matrix& C, double radius, int agent_i = -1,
                           int agent_j = -1, int time = -1);

/// Collision row on the pair difference d = x^i - x^j:
/// l_i' mu_i + l_j' mu_j + c <= 0 with l_i = -2 C dbar and l_j = +2 C dbar.
struct PairRow {
  Vector coeff_i;
  Vector coeff_j;
  double offset = 0.0;
  double backoff = 0.0;

  double value(const Vector& mu_i, const Vector& mu_j) const {
    return coeff_i.dot(mu_i) + coeff_j.dot(mu_j) + offset;
  }
};

/// `offset_difference` is the part of the true separation not carried by the
/// decision variables (the nominal, in deviation coordinates); zero otherwise.
PairRow linearize_collision(const Vector& offset_difference, const Matrix& difference_cov,
                            const Vector& dbar, double radius, const Matrix& C, double risk);

/// Scalar row s * x_q + c <= 0 (s = +1 for an upper bound, -1 for a lower one).
struct ScalarRow {
  double sign = 1.0;
  double offset = 0.0;
  double backoff = 0.0;
};

ScalarRow linearize_box(double bound, bool upper, double state_offset, double variance,
                        double risk);

/// Rows emitted per time by the problem's constraint specs.
std::vector<int> count_rows(const GameProblem& problem);

/// Reformulates every chance constraint of the problem into affine rows on the
/// expected trajectory (game coordinates). `reference_means` are true-coordinate
/// means used for the collision reference directions.
AffineConstraintSet assemble_constraints(const GameProblem& problem, const CovarianceSchedule& cov,
                                         const Trajectory& reference_means,
                                         const RiskAllocation& risk);

}  // namespace ccgame
