#pragma once

#include <stdexcept>
#include <string>

namespace pmatch {

// Exit codes surfaced by the command-line tool.
enum class ErrorKind {
  kConfig = 2,
  kEngineCap = 3,
  kNumeric = 4,
  kDomain = 5,
  kContract = 6,
  kSampling = 7,
  kWindow = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};

/// Thrown when a problem exceeds an enumeration or memory cap of an engine.
struct EngineCapError : Error {
  explicit EngineCapError(const std::string& w)
      : Error(ErrorKind::kEngineCap, w) {}
};

/// Quadrature non-convergence, infeasible weights, and similar failures.
struct NumericError : Error {
  explicit NumericError(const std::string& w)
      : Error(ErrorKind::kNumeric, w) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::kDomain, w) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w)
      : Error(ErrorKind::kContract, w) {}
};

struct SamplingError : Error {
  explicit SamplingError(const std::string& w)
      : Error(ErrorKind::kSampling, w) {}
};

/// A point-process window does not contain the indices a computation needs.
struct WindowTooSmall : Error {
  explicit WindowTooSmall(const std::string& w)
      : Error(ErrorKind::kWindow, w) {}
};

}  // namespace pmatch
