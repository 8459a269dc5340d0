#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace caos {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bytes: bad magic, short buffer, wrong lengths.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        message_(what),
        offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what), message_(what) {}
  std::size_t offset() const { return offset_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t offset_ = 0;
};

/// Authentication failed on a sealed block (corruption or foreign key).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Retry budget of a client access exhausted.
class AccessError : public Error {
 public:
  using Error::Error;
};

/// A block id that the client map does not know.
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace caos
