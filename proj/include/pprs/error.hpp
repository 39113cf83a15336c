#pragma once

#include <stdexcept>
#include <string>

namespace pprs {

/// Error kinds raised across the library. Each maps to one failure mode of a
/// public operation; tests match on the kind rather than the message text.
enum class ErrorKind {
  CycleDetected,
  MultipleLeaves,
  ArityMismatch,
  NonScalarLeaf,
  DimensionMismatch,
  StaleTrace,
  LabelOutOfRange,
  EmptyDataset,
  NonFiniteGradient,
  NonFiniteLoss,
  InvalidEpsilon,
  ConfigParseError,
  ObjectiveUnknown,
  OutputUnwritable,
  UnknownMode,
  EmptyRecords,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pprs
