#include "mfsf/error.hpp"

namespace mfsf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::MissingArtifact: return "missing artifact";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Runtime: return "runtime error";
  }
  return "unknown error";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace mfsf
