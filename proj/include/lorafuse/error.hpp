#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lorafuse {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands; message reports both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (rank 0, ratio out of range, ...).
class ParamError : public Error {
 public:
  using Error::Error;
};

// Inconsistent prune map (out-of-bounds indices, broken coupling).
class MapError : public Error {
 public:
  using Error::Error;
};

// Recovery could not embed a pruned adapter; names the layer.
class RecoveryError : public Error {
 public:
  using Error::Error;
};

// Fusion protocol violated (e.g. FFA clients with diverging frozen A).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Local training diverged; carries the step at which it happened.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& msg, std::size_t step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Config file rejected; message lists every offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure; message includes the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// Adapter file malformed (bad magic, version, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Adapter file checksum mismatch.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Bookkeeping violated (negative counts, empty report, ...).
class AccountingError : public Error {
 public:
  using Error::Error;
};

}  // namespace lorafuse
