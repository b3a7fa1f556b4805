#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace chronoshift {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  kOk = 0,
  kUserError = 2,
  kRestoreFailure = 3,
  kCorruption = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::kUserError; }
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(const std::string& name)
      : Error("unbound variable '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t line, std::size_t column)
      : Error("syntax error at " + std::to_string(line) + ":" +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Raised by the interpreter; carries the source position of the failing
// statement.
class ScriptRuntimeError : public Error {
 public:
  ScriptRuntimeError(const std::string& what, std::size_t line)
      : Error("runtime error at line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class MissingDependency : public Error {
 public:
  using Error::Error;
};

class NotFlat : public Error {
 public:
  using Error::Error;
};

class UnknownTimestamp : public Error {
 public:
  explicit UnknownTimestamp(std::uint64_t t)
      : Error("unknown checkpoint t" + std::to_string(t)) {}
};

class UnknownKey : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class RestoreFailed : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kRestoreFailure; }
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kCorruption; }
};

class StorageError : public IoError {
 public:
  using IoError::IoError;
};

class CorruptBlob : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kCorruption; }
};

class CorruptJournal : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kCorruption; }
};

}  // namespace chronoshift
