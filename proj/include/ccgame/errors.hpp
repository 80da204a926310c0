#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ccgame {

enum class ErrorKind {
  DimensionMismatch,
  NotPositiveDefinite,
  BadProbability,
  InvalidValue,
  DegenerateReference,
  AllocationTooSmall,
  DomainError,
  SingularStageSystem,
  StepSizeUnavailable,
  FactorizationFailure,
  FingerprintMismatch,
  Format,
};

std::string_view to_string(ErrorKind kind);

/// Base class of every error raised by the library. `kind()` is stable and
/// is what the CLI prints in its structured stderr line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct Violation {
  ErrorKind kind;
  std::string field;
  std::string detail;
  double value = 0.0;
};

/// Raised by scenario validation; carries every violation found, not just
/// the first one.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class DegenerateReferenceError : public Error {
 public:
  DegenerateReferenceError(int agent_i, int agent_j, int time, double separation);
  int agent_i() const noexcept { return agent_i_; }
  int agent_j() const noexcept { return agent_j_; }
  int time() const noexcept { return time_; }

 private:
  int agent_i_;
  int agent_j_;
  int time_;
};

class SingularStageSystemError : public Error {
 public:
  SingularStageSystemError(int stage, double rcond);
  int stage() const noexcept { return stage_; }
  double rcond() const noexcept { return rcond_; }

 private:
  int stage_;
  double rcond_;
};

}  // namespace ccgame
