#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace istftnet {

// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Model identifier does not match ("C" uint)+ ("I")?.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Identifier parses but cannot be realized (divisibility, odd stride, ...).
class InvalidArchitecture : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value produced during synthesis.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class MagicMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedData : public FormatError {
 public:
  TruncatedData(const std::string& what, std::size_t expected_bytes,
                std::size_t actual_bytes)
      : FormatError(what + ": expected " + std::to_string(expected_bytes) +
                        " bytes, got " + std::to_string(actual_bytes),
                    actual_bytes),
        expected_(expected_bytes),
        actual_(actual_bytes) {}

  std::size_t expected_bytes() const noexcept { return expected_; }
  std::size_t actual_bytes() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// Weight file tensors disagree with the shape schedule of its model id.
class ScheduleMismatch : public FormatError {
 public:
  ScheduleMismatch(const std::string& tensor, const std::string& what,
                   std::size_t offset)
      : FormatError("tensor '" + tensor + "': " + what, offset),
        tensor_(tensor) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace istftnet
