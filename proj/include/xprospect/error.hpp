#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xprospect {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input rejected because of its value domain, shape, or size.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A NaN or infinity showed up during compute. `where` names the layer,
/// parameter or step that produced it.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::string where)
      : Error(what + ": " + where), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace xprospect
