#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace llmeval {

enum class Errc {
  InvalidArgument,
  NonSquare,
  TooSmall,
  NonPositiveEntry,
  DimensionMismatch,
  NoConvergence,
  MissingRI,
  ValidationFailed,
  InconsistentMatrix,
  EmptyTable,
  MetricMismatch,
  SubjectMismatch,
  OutOfRange,
  ParseFailure,
  BackendUnavailable,
  AllRunsFailed,
  NoSuccessfulRuns,
  MissingRequiredColumn,
  UnreadableStream,
  BadRequest,
  UnknownSession,
  BadCell,
  NonPositiveValue,
  UnknownName,
  MatrixIncomplete,
  MissingRatings,
  UnknownJob,
  Io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonSquare: return "NonSquare";
    case Errc::TooSmall: return "TooSmall";
    case Errc::NonPositiveEntry: return "NonPositiveEntry";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::MissingRI: return "MissingRI";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::InconsistentMatrix: return "InconsistentMatrix";
    case Errc::EmptyTable: return "EmptyTable";
    case Errc::MetricMismatch: return "MetricMismatch";
    case Errc::SubjectMismatch: return "SubjectMismatch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::AllRunsFailed: return "AllRunsFailed";
    case Errc::NoSuccessfulRuns: return "NoSuccessfulRuns";
    case Errc::MissingRequiredColumn: return "MissingRequiredColumn";
    case Errc::UnreadableStream: return "UnreadableStream";
    case Errc::BadRequest: return "BadRequest";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::BadCell: return "BadCell";
    case Errc::NonPositiveValue: return "NonPositiveValue";
    case Errc::UnknownName: return "UnknownName";
    case Errc::MatrixIncomplete: return "MatrixIncomplete";
    case Errc::MissingRatings: return "MissingRatings";
    case Errc::UnknownJob: return "UnknownJob";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

// Single exception type for every domain failure. `details` carries
// machine-readable context such as offending cells or per-run errors.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::vector<std::string> details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  Errc code_;
  std::vector<std::string> details_;
};

}  // namespace llmeval
