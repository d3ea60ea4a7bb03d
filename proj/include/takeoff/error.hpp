#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace takeoff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration field was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A series or file with no data where at least one value is required.
class EmptyInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Input text could not be parsed; `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when a final-size distribution has no take-off branch.
class UnimodalError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value encountered during numerical work.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or cache file does not match the expected version/shape.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Fine-tuning target overlaps with the pretraining networks.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

}  // namespace takeoff
