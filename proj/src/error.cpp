/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/error.hpp"

namespace pucoord {

const char *to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::FieldOverflow: return "FieldOverflow";
  case ErrorKind::UnknownOpcode: return "UnknownOpcode";
  case ErrorKind::SyntaxError: return "SyntaxError";
  case ErrorKind::GroupViolation: return "GroupViolation";
  case ErrorKind::MissingConfigPredecessor: return "MissingConfigPredecessor";
  case ErrorKind::InvalidProgram: return "InvalidProgram";
  case ErrorKind::BadImage: return "BadImage";
  case ErrorKind::SchemaError: return "SchemaError";
  case ErrorKind::CycleDetected: return "CycleDetected";
  case ErrorKind::NegativeDim: return "NegativeDim";
  case ErrorKind::UnsupportedPattern: return "UnsupportedPattern";
  case ErrorKind::UnknownPid: return "UnknownPid";
  case ErrorKind::DeadlockDetected: return "DeadlockDetected";
  case ErrorKind::LimitExceeded: return "LimitExceeded";
  case ErrorKind::EmptyGraph: return "EmptyGraph";
  case ErrorKind::Infeasible: return "Infeasible";
  case ErrorKind::ChannelsExhausted: return "ChannelsExhausted";
  case ErrorKind::Usage: return "Usage";
  case ErrorKind::Io: return "Io";
  }
  return "Error";
}

} // namespace pucoord
