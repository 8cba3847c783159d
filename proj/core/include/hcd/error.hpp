#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hcd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary/text parse failure. Carries the byte offset at which decoding failed.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Training or scoring hit a degenerate numeric state (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hcd
