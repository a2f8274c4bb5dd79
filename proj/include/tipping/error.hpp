#ifndef TIPPING_ERROR_HPP
#define TIPPING_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tipping {

enum class ErrorCode {
  InvalidThreshold,
  InvalidRewardOrder,
  InvalidProbability,
  DuplicateLabels,
  InvalidParameter,
  NonPositiveK,
  HistoryLengthMismatch,
  UnknownLabel,
  LengthMismatch,
  NonPositiveMultiplier,
  PolicyFailure,
  PolicyFamilyMismatch,
  EndpointError,
  TimeoutError,
  AuthError,
  NoDecisionFound,
  UnknownChoice,
  EmptyInput,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Issue {
  ErrorCode code;
  std::string message;
};

// Thrown by validators; carries every violated invariant, not just the first.
class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(std::vector<Issue> issues);
  ValidationFailure(std::vector<Issue> issues, ErrorCode code);
  const std::vector<Issue>& issues() const noexcept { return issues_; }
  bool has(ErrorCode code) const;

 private:
  std::vector<Issue> issues_;
};

}  // namespace tipping

#endif
