#pragma once

#include <stdexcept>
#include <string>

namespace fea2fea {

// Process exit codes used by the command-line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, convergence = 3 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::data; }
};

// Malformed input file or record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Inconsistent dataset contents (missing files, edges crossing graphs, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A feature column that cannot be binned (all values identical).
class BinningError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }
  ExitCode exit_code() const noexcept override { return ExitCode::convergence; }

 private:
  double residual_;
};

class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

}  // namespace fea2fea
