#include "ccgame/uncertainty.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "ccgame/errors.hpp"

namespace ccgame {

Matrix CovarianceSchedule::difference_covariance(int t, int offset_i, int offset_j,
                                                 int dim) const {
  const Matrix& s = sigma[t];
  return s.block(offset_i, offset_i, dim, dim) + s.block(offset_j, offset_j, dim, dim) -
         s.block(offset_i, offset_j, dim, dim) - s.block(offset_j, offset_i, dim, dim);
}

CovarianceSchedule propagate_covariance(std::span<const Matrix> A, std::span<const Matrix> W) {
  const auto n = A.empty() ? W.front().rows() : A.front().rows();
  CovarianceSchedule cov;
  cov.sigma.reserve(A.size() + 1);
  cov.sigma.push_back(Matrix::Zero(n, n));
  for (std::size_t t = 0; t < A.size(); ++t) {
    Matrix next = A[t] * cov.sigma.back() * A[t].transpose() + W[t];
    cov.sigma.push_back(0.5 * (next + next.transpose()));
  }
  return cov;
}

CovarianceSchedule propagate_covariance(const LtvGameDynamics& dyn) {
  if (dyn.A.empty()) {
    CovarianceSchedule cov;
    cov.sigma.push_back(Matrix::Zero(dyn.state_dim(), dyn.state_dim()));
    return cov;
  }
  return propagate_covariance(dyn.A, dyn.W);
}

int RiskAllocation::total_rows() const {
  return std::accumulate(rows_per_time.begin(), rows_per_time.end(), 0);
}

double RiskAllocation::at(int t, int k) const {
  if (t < 1 || t > static_cast<int>(rows_per_time.size()) || k < 0 ||
      k >= rows_per_time[t - 1]) {
    throw Error(ErrorKind::InvalidValue, "risk allocation has no row (" + std::to_string(t) +
                                             "," + std::to_string(k) + ")");
  }
  return per_row;
}

double RiskAllocation::sum() const {
  // Summed row by row so the check exercises the same accumulation a caller would.
  double s = 0.0;
  for (int rows : rows_per_time) {
    for (int k = 0; k < rows; ++k) s += per_row;
  }
  return s;
}

RiskAllocation allocate_risk(double epsilon, std::span<const int> rows_per_time) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorKind::BadProbability, "risk budget must lie in (0, 1)");
  }
  RiskAllocation alloc;
  alloc.epsilon = epsilon;
  alloc.rows_per_time.assign(rows_per_time.begin(), rows_per_time.end());
  const double total = std::accumulate(rows_per_time.begin(), rows_per_time.end(), 0.0);
  if (total < 1.0) throw Error(ErrorKind::InvalidValue, "risk allocation needs at least one row");
  alloc.per_row = epsilon / total;
  if (alloc.per_row < kMinRowRisk) {
    throw Error(ErrorKind::AllocationTooSmall,
                "per-row risk " + std::to_string(alloc.per_row) + " below the quantile guard");
  }
  return alloc;
}

RiskAllocation allocate_risk(double epsilon, int rows_per_step, int horizon) {
  // Counts beyond int range are routed through the guard directly.
  const double total = static_cast<double>(rows_per_step) * horizon;
  if (total >= 1.0 && epsilon / total < kMinRowRisk) {
    throw Error(ErrorKind::AllocationTooSmall, "per-row risk below the quantile guard");
  }
  std::vector<int> rows(horizon, rows_per_step);
  return allocate_risk(epsilon, rows);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace {

// Acklam's rational approximation of the lower-tail quantile, p <= 0.5.
double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double inverse_normal_cdf(double p) {
  if (!(p > kMinRowRisk && p < 1.0 - kMinRowRisk)) {
    throw Error(ErrorKind::DomainError, "quantile argument outside (1e-12, 1 - 1e-12)");
  }
  if (p == 0.5) return 0.0;
  // Work in the smaller tail so the residual is not swamped by rounding of 1 - p.
  const bool upper = p > 0.5;
  const double tail = upper ? 1.0 - p : p;
  double x = acklam_lower(tail);
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - tail;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return upper ? -x : x;
}

AffineConstraintSet::AffineConstraintSet(int horizon, int state_dim,
                                         std::vector<ConstraintRow> rows)
    : horizon_(horizon), state_dim_(state_dim), rows_(std::move(rows)) {
  time_begin_.assign(horizon_ + 2, 0);
  for (const auto& r : rows_) {
    if (r.time < 1 || r.time > horizon_) {
      throw Error(ErrorKind::InvalidValue, "constraint row outside times 1..T");
    }
    ++time_begin_[r.time + 1];
  }
  for (int t = 1; t <= horizon_ + 1; ++t) time_begin_[t] += time_begin_[t - 1];
  for (std::size_t m = 1; m < rows_.size(); ++m) {
    if (rows_[m].time < rows_[m - 1].time) {
      throw Error(ErrorKind::InvalidValue, "constraint rows must be ordered by time");
    }
  }
}

std::pair<int, int> AffineConstraintSet::rows_at(int t) const {
  if (rows_.empty() || t < 1 || t > horizon_) return {0, 0};
  return {time_begin_[t], time_begin_[t + 1]};
}

Matrix AffineConstraintSet::dense_l() const {
  Matrix l = Matrix::Zero(static_cast<Eigen::Index>(horizon_) * state_dim_, size());
  for (int m = 0; m < size(); ++m) {
    const auto& r = rows_[m];
    l.block((r.time - 1) * state_dim_, m, state_dim_, 1) = r.coeff;
  }
  return l;
}

Vector AffineConstraintSet::offsets() const {
  Vector c(size());
  for (int m = 0; m < size(); ++m) c[m] = rows_[m].offset;
  return c;
}

Vector AffineConstraintSet::evaluate(const Trajectory& x) const {
  Vector g(size());
  for (int m = 0; m < size(); ++m) {
    const auto& r = rows_[m];
    g[m] = r.coeff.dot(x[r.time]) + r.offset;
  }
  return g;
}

Vector AffineConstraintSet::weighted_sum(int t, const Vector& lambda) const {
  Vector out = Vector::Zero(state_dim_);
  const auto [begin, end] = rows_at(t);
  for (int m = begin; m < end; ++m) {
    if (lambda[m] != 0.0) out.noalias() += lambda[m] * rows_[m].coeff;
  }
  return out;
}

Vector reference_direction(const Vector& delta, const Matrix& C, double radius, int agent_i,
                           int agent_j, int time) {
  const double norm = std::sqrt(std::max(0.0, delta.dot(C * delta)));
  if (norm < 1e-9) throw DegenerateReferenceError(agent_i, agent_j, time, norm);
  return radius * delta / norm;
}

PairRow linearize_collision(const Vector& offset_difference, const Matrix& difference_cov,
                            const Vector& dbar, double radius, const Matrix& C, double risk) {
  const double norm = std::sqrt(std::max(0.0, dbar.dot(C * dbar)));
  if (std::abs(norm - radius) > 1e-9 * std::max(1.0, radius)) {
    throw Error(ErrorKind::InvalidValue, "reference direction must satisfy ||dbar||_C = R");
  }
  const Vector cd = C * dbar;
  const double z = inverse_normal_cdf(1.0 - risk);
  PairRow row;
  row.coeff_i = -2.0 * cd;
  row.coeff_j = 2.0 * cd;
  row.backoff = 2.0 * z * std::sqrt(std::max(0.0, cd.dot(difference_cov * cd)));
  row.offset = 2.0 * dbar.dot(cd) - 2.0 * cd.dot(offset_difference) + row.backoff;
  return row;
}

ScalarRow linearize_box(double bound, bool upper, double state_offset, double variance,
                        double risk) {
  ScalarRow row;
  row.backoff = inverse_normal_cdf(1.0 - risk) * std::sqrt(std::max(0.0, variance));
  if (upper) {
    row.sign = 1.0;
    row.offset = state_offset - bound + row.backoff;
  } else {
    row.sign = -1.0;
    row.offset = bound - state_offset + row.backoff;
  }
  return row;
}

std::vector<int> count_rows(const GameProblem& problem) {
  std::vector<int> rows(problem.horizon, 0);
  for (int t = 1; t <= problem.horizon; ++t) {
    for (const auto& spec : problem.constraints) {
      if (!spec.active_at(t)) continue;
      if (const auto* box = std::get_if<BoxConstraint>(&spec.kind)) {
        for (std::size_t q = 0; q < box->lower.size(); ++q) {
          rows[t - 1] += box->lower[q].has_value() + box->upper[q].has_value();
        }
      } else {
        ++rows[t - 1];
      }
    }
  }
  return rows;
}

AffineConstraintSet assemble_constraints(const GameProblem& problem, const CovarianceSchedule& cov,
                                         const Trajectory& reference_means,
                                         const RiskAllocation& risk) {
  const int n_x = problem.state_dim();
  std::vector<ConstraintRow> rows;
  for (int t = 1; t <= problem.horizon; ++t) {
    int k = 0;
    for (std::size_t s = 0; s < problem.constraints.size(); ++s) {
      const auto& spec = problem.constraints[s];
      if (!spec.active_at(t)) continue;
      if (const auto* box = std::get_if<BoxConstraint>(&spec.kind)) {
        for (int q = 0; q < n_x; ++q) {
          for (const bool upper : {false, true}) {
            const auto& bound = upper ? box->upper[q] : box->lower[q];
            if (!bound) continue;
            const double eps = risk.at(t, k++);
            const auto sr =
                linearize_box(*bound, upper, problem.state_offset[t][q], cov.sigma[t](q, q), eps);
            ConstraintRow row;
            row.time = t;
            row.coeff = Vector::Zero(n_x);
            row.coeff[q] = sr.sign;
            row.offset = sr.offset;
            row.info.kind = RowKind::Box;
            row.info.source = static_cast<int>(s);
            row.info.coordinate = q;
            row.info.upper = upper;
            row.info.risk = eps;
            row.info.backoff = sr.backoff;
            rows.push_back(std::move(row));
          }
        }
      } else {
        const auto& col = std::get<CollisionConstraint>(spec.kind);
        const int dim = problem.agents[col.agent_i].state_dim;
        const int oi = problem.agent_offsets[col.agent_i];
        const int oj = problem.agent_offsets[col.agent_j];
        const double eps = risk.at(t, k++);
        const Vector delta =
            reference_means[t].segment(oi, dim) - reference_means[t].segment(oj, dim);
        const Vector dbar =
            reference_direction(delta, col.C, col.radius, col.agent_i, col.agent_j, t);
        const Vector offset_diff =
            problem.state_offset[t].segment(oi, dim) - problem.state_offset[t].segment(oj, dim);
        const auto pr = linearize_collision(offset_diff, cov.difference_covariance(t, oi, oj, dim),
                                            dbar, col.radius, col.C, eps);
        ConstraintRow row;
        row.time = t;
        row.coeff = Vector::Zero(n_x);
        row.coeff.segment(oi, dim) = pr.coeff_i;
        row.coeff.segment(oj, dim) += pr.coeff_j;
        row.offset = pr.offset;
        row.info.kind = RowKind::Collision;
        row.info.source = static_cast<int>(s);
        row.info.agent_i = col.agent_i;
        row.info.agent_j = col.agent_j;
        row.info.reference_direction = dbar;
        row.info.risk = eps;
        row.info.backoff = pr.backoff;
        rows.push_back(std::move(row));
      }
    }
  }
  return AffineConstraintSet(problem.horizon, n_x, std::move(rows));
}

}  // namespace ccgame
