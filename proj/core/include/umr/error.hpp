#pragma once

#include <stdexcept>
#include <string>

namespace umr {

/// Error categories. The CLI maps these onto stable exit codes.
enum class ErrorCode {
  InvalidArgument,   // shape mismatch, bad configuration, precondition breach
  Numerical,         // non-finite values, division floor breach, divergence
  Io,                // cannot open/read/write a file
  VersionMismatch,   // container or checkpoint written by another format version
  TruncatedFile,     // payload shorter than its index claims
  MissingDataset,    // named array absent from a container
  MissingAttribute,  // named attribute absent from a container
  SchemaViolation,   // axis order/shape inconsistent with the container schema
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace umr
