// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace segalign {

enum class ErrorCode {
  Io,
  BadMagic,
  TruncatedPayload,
  NonFinite,
  Validation,
  DimensionMismatch,
  OutOfRange,
  InsufficientData,
  Precondition,
  Transport,
  MalformedResponse,
  Divergence,
  Contract,
  Numerical,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::TruncatedPayload: return "truncated payload";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::OutOfRange: return "out of range";
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::Precondition: return "precondition";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::MalformedResponse: return "malformed response";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Contract: return "contract violation";
    case ErrorCode::Numerical: return "numerical";
  }
  return "unknown";
}

// All library failures are reported as Error; code() distinguishes them.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace segalign
