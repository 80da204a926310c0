#include "ccgame/errors.hpp"

#include <sstream>

namespace ccgame {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::BadProbability: return "BadProbability";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::DegenerateReference: return "DegenerateReference";
    case ErrorKind::AllocationTooSmall: return "AllocationTooSmall";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::SingularStageSystem: return "SingularStageSystem";
    case ErrorKind::StepSizeUnavailable: return "StepSizeUnavailable";
    case ErrorKind::FactorizationFailure: return "FactorizationFailure";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorKind::Format: return "Format";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

namespace {

std::string join_violations(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << violations.size() << " violation(s)";
  for (const auto& v : violations) {
    os << "; " << to_string(v.kind) << " in " << v.field << ": " << v.detail;
  }
  return os.str();
}

ErrorKind first_kind(const std::vector<Violation>& violations) {
  return violations.empty() ? ErrorKind::InvalidValue : violations.front().kind;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(first_kind(violations), join_violations(violations)),
      violations_(std::move(violations)) {}

DegenerateReferenceError::DegenerateReferenceError(int agent_i, int agent_j, int time,
                                                   double separation)
    : Error(ErrorKind::DegenerateReference,
            "nominal separation of agents (" + std::to_string(agent_i) + "," +
                std::to_string(agent_j) + ") at t=" + std::to_string(time) + " is " +
                std::to_string(separation) + ", no reference direction"),
      agent_i_(agent_i),
      agent_j_(agent_j),
      time_(time) {}

SingularStageSystemError::SingularStageSystemError(int stage, double rcond)
    : Error(ErrorKind::SingularStageSystem,
            "stage " + std::to_string(stage) +
                " Nash system is numerically singular (rcond estimate " +
                std::to_string(rcond) + ")"),
      stage_(stage),
      rcond_(rcond) {}

}  // namespace ccgame
