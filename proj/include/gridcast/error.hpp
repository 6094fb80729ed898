#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridcast {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  shape,
  format,
  version,
  truncated,
  divergence,
  out_of_range,
  missing_cache,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::shape, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

/// CSV ingest failure. `line` is 1-based; 0 when the file is empty.
class ParseError : public Error {
 public:
  enum class Kind { missing_header, bad_header, ragged_row, non_numeric, too_short };

  ParseError(Kind kind, std::size_t line, const std::string& what)
      : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// Model file failures; each maps to its own ErrorCode.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCode::format, what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorCode::version, what) {}
};

class TruncatedError : public Error {
 public:
  explicit TruncatedError(const std::string& what) : Error(ErrorCode::truncated, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error(ErrorCode::divergence, what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class OutOfRange : public Error {
 public:
  explicit OutOfRange(const std::string& what) : Error(ErrorCode::out_of_range, what) {}
};

class MissingCache : public Error {
 public:
  explicit MissingCache(const std::string& what) : Error(ErrorCode::missing_cache, what) {}
};

}  // namespace gridcast
