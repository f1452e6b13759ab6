#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pillarfss {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kIo = 1,
  kParse = 2,
  kSolver = 3,
  kFit = 4,
  kTuner = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kIo; }
};

/// File system failures; exit code kIo.
class IoError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kParse; }
};

class MeshError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kParse; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kParse; }
};

class InputError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kParse; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kSolver; }
};

/// Newton failed to reach the tolerance; carries the residual history of the
/// last continuation step.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), residual_history_(std::move(history)) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kSolver; }
  const std::vector<double>& residual_history() const noexcept { return residual_history_; }
  double last_residual() const noexcept {
    return residual_history_.empty() ? 0.0 : residual_history_.back();
  }

 private:
  std::vector<double> residual_history_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kSolver; }
};

class FitError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kFit; }
};

class TunerError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kTuner; }
};

}  // namespace pillarfss
