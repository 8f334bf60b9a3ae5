#pragma once

#include <stdexcept>
#include <string>

namespace resample {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Rejected input: dimension mismatch, out-of-range argument, invalid spec.
class InvalidArgumentError : public Error {
public:
  using Error::Error;
};

/// API misuse: backward without a cached forward, stepping a finished episode.
class UsageError : public Error {
public:
  using Error::Error;
};

/// Non-finite gradients, exploding losses. Carries the location of the blowup.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, int where) : Error(what), where_(where) {}
  /// Layer index (optimizer paths) or epoch/step index (training paths).
  int where() const { return where_; }

private:
  int where_;
};

/// Corrupt, truncated or version-mismatched files. Carries the byte offset.
class FormatError : public Error {
public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

/// Action on or outside the tanh squash boundary; callers clip inward by 1e-6.
class BoundaryError : public Error {
public:
  using Error::Error;
};

/// Missing prerequisite for an operation (unannotated returns, empty dataset).
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Bad or inconsistent configuration (also missing checkpoints).
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace resample
