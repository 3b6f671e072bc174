/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <stdexcept>
#include <string>

namespace pucoord {

/// Error categories shared by every module. The CLI maps each category onto a
/// stable process exit code.
enum class ErrorKind {
  FieldOverflow,
  UnknownOpcode,
  SyntaxError,
  GroupViolation,
  MissingConfigPredecessor,
  InvalidProgram,
  BadImage,
  SchemaError,
  CycleDetected,
  NegativeDim,
  UnsupportedPattern,
  UnknownPid,
  DeadlockDetected,
  LimitExceeded,
  EmptyGraph,
  Infeasible,
  ChannelsExhausted,
  Usage,
  Io,
};

const char *to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace pucoord
