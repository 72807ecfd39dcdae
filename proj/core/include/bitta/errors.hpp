#ifndef BITTA_ERRORS_HPP
#define BITTA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bitta {

/// Shape rule violation in a tensor primitive. Carries the offending op name.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, std::string detail)
      : std::invalid_argument("shape error in " + op + ": " + detail),
        op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Bad argument value (out-of-range index, invalid configuration, ...).
class ValueError : public std::invalid_argument {
 public:
  explicit ValueError(const std::string& what) : std::invalid_argument(what) {}
};

/// Non-finite value where finite math is required.
class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure to open/read/write a file.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Header is not parseable as the expected text format.
class CorruptHeaderError : public std::runtime_error {
 public:
  explicit CorruptHeaderError(const std::string& what)
      : std::runtime_error("corrupt header: " + what) {}
};

/// Header parsed but declares a format version this build does not read.
class UnsupportedVersionError : public std::runtime_error {
 public:
  explicit UnsupportedVersionError(const std::string& found)
      : std::runtime_error("unsupported version: " + found) {}
};

/// Payload length does not match what the header promises.
class LengthMismatchError : public std::runtime_error {
 public:
  LengthMismatchError(std::size_t expected, std::size_t actual)
      : std::runtime_error("length mismatch: expected " +
                           std::to_string(expected) + " values, got " +
                           std::to_string(actual)) {}
};

}  // namespace bitta

#endif  // BITTA_ERRORS_HPP
