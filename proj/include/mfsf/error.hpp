#pragma once

#include <stdexcept>
#include <string>

namespace mfsf {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  Config,
  MissingArtifact,
  Io,
  Runtime,
};

const char* to_string(ErrorKind kind) noexcept;

// All library failures are reported through this exception; the C API maps
// `kind()` onto its status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace mfsf
