#pragma once

#include <stdexcept>
#include <string>

namespace ucolor {

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes (usage 1, IO 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image extents that do not line up. `axis` names the offending
// dimension ("channels", "height", "kernel", ...).
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string axis, std::string detail)
      : Error(op + ": shape mismatch on " + axis + ": " + detail),
        op_(std::move(op)),
        axis_(std::move(axis)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string op_;
  std::string axis_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ucolor
