#pragma once

#include <stdexcept>
#include <string>

namespace bridge {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
  kVersionMismatch = 5,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

/// Raised when the training loss or a gradient becomes non-finite.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(what, ExitCode::kDivergence) {}
};

/// Bank / checkpoint provenance mismatch (encoder hash or content checksum).
class VersionMismatchError : public Error {
 public:
  explicit VersionMismatchError(const std::string& what)
      : Error(what, ExitCode::kVersionMismatch) {}
};

class DegenerateEmbedding : public std::domain_error {
 public:
  explicit DegenerateEmbedding(const std::string& what) : std::domain_error(what) {}
};

class NondeterministicLoss : public std::logic_error {
 public:
  explicit NondeterministicLoss(const std::string& what) : std::logic_error(what) {}
};

class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace bridge
