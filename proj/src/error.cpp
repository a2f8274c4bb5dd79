#include "tipping/error.hpp"

#include <algorithm>

namespace tipping {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::InvalidRewardOrder: return "InvalidRewardOrder";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::DuplicateLabels: return "DuplicateLabels";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NonPositiveK: return "NonPositiveK";
    case ErrorCode::HistoryLengthMismatch: return "HistoryLengthMismatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveMultiplier: return "NonPositiveMultiplier";
    case ErrorCode::PolicyFailure: return "PolicyFailure";
    case ErrorCode::PolicyFamilyMismatch: return "PolicyFamilyMismatch";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::TimeoutError: return "TimeoutError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::NoDecisionFound: return "NoDecisionFound";
    case ErrorCode::UnknownChoice: return "UnknownChoice";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string join_issues(const std::vector<Issue>& issues) {
  std::string out = "validation failed:";
  for (const auto& issue : issues) {
    out += " [";
    out += to_string(issue.code);
    out += "] ";
    out += issue.message;
    out += ";";
  }
  return out;
}

}  // namespace

ValidationFailure::ValidationFailure(std::vector<Issue> issues)
    : Error(issues.size() == 1 ? issues.front().code : ErrorCode::ValidationError,
            join_issues(issues)),
      issues_(std::move(issues)) {}

ValidationFailure::ValidationFailure(std::vector<Issue> issues, ErrorCode code)
    : Error(code, join_issues(issues)), issues_(std::move(issues)) {}

bool ValidationFailure::has(ErrorCode code) const {
  return std::any_of(issues_.begin(), issues_.end(),
                     [code](const Issue& i) { return i.code == code; });
}

}  // namespace tipping
