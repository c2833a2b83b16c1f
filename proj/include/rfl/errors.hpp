#pragma once

#include <stdexcept>
#include <string>

namespace rfl {

// Every error raised by the toolkit derives from Error. The CLI maps each
// subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(format(message, line, column)), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& message, int line, int column) {
    return "line " + std::to_string(line) + ", column " + std::to_string(column) +
           ": " + message;
  }

  int line_;
  int column_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

// Model-file violations that are not plain syntax errors (dimensions,
// missing values, undeclared symbols).
class ModelError : public Error {
 public:
  using Error::Error;
};

class DegreeError : public Error {
 public:
  using Error::Error;
};

class BoundError : public Error {
 public:
  using Error::Error;
};

class RiccatiError : public Error {
 public:
  using Error::Error;
};

class SimError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfl
