#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drcrt {

enum class ErrorKind {
  // dataset and configuration validation
  MissingColumn,
  NonBinaryArm,
  ArmVariesWithinCluster,
  NegativeTime,
  SingleArmDataset,
  InvalidData,
  UnknownTerm,
  InvalidConfig,
  SchemaViolation,
  Io,
  // model fitting
  NoEventsInRole,
  NonConvergence,
  SingularInformation,
  NoSubjectsInArm,
  // estimation
  CensoringSurvivalUnderflow,
  OracleArmMismatch,
  RatioDenominatorZero,
  TauBeyondGrid,
  // inference and studies
  LeaveOneOutInfeasible,
  StudyAborted,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code used by the CLI for an error of this kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace drcrt
