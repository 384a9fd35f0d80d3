#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aide {

// Error kinds surfaced on every transport; the names are part of the wire
// contract (`data.kind` in JSON-RPC errors, `error.kind` in REST bodies).
enum class ErrorKind {
  ValidationError,
  DuplicateTraceId,
  StorageFull,
  CorruptLog,
  BatchTooLarge,
  EvaluatorError,
  UnknownField,
  InvalidRange,
  UnknownProject,
  UnknownTrace,
  WindowTooWide,
  VersionConflict,
  EmptyTemplate,
  UnknownPrompt,
  UnknownVersion,
  NoHistory,
  EmptyRun,
  UnknownRun,
  EmptyWindow,
  UnknownBinding,
  UnknownExperiment,
  ExperimentNotRunning,
  ExperimentAlreadyRunning,
  ScoreOutOfRange,
  PausedAgent,
  UnknownRule,
  UnknownProposal,
  IllegalTransition,
  LaggingSubscriber,
  Unauthorized,
  InvalidParams,
  NotFound,
  Internal,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Invariant violation on a specific field of a submitted record.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::string reason)
      : Error(ErrorKind::ValidationError, field + ": " + reason),
        field_(std::move(field)),
        reason_(std::move(reason)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

class CorruptLogError : public Error {
 public:
  CorruptLogError(std::string file, std::uint64_t offset, std::string reason)
      : Error(ErrorKind::CorruptLog,
              file + " @" + std::to_string(offset) + ": " + reason),
        file_(std::move(file)),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

}  // namespace aide
