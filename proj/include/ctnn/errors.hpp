#pragma once

#include <stdexcept>
#include <string>

namespace ctnn {

// Machine-readable failure categories. Each maps to a process exit code so
// scripted callers can distinguish usage mistakes from bad data and from
// numerical breakdown.
enum class ErrorCode {
  usage,              // bad CLI arguments or malformed run configuration
  malformed_header,   // raster/tree/checkpoint header missing or invalid
  version_mismatch,   // file format version not supported
  dimension_mismatch, // payload size disagrees with header, or rasters disagree
  non_finite_value,   // NaN or infinity where a finite value is required
  class_range,        // label outside [0, num_classes)
  duplicate_values,   // elevation grid contains repeated values
  bad_argument,       // out-of-range parameter (precision, epsilon, hops, ...)
  inconsistent_input, // structurally valid inputs that do not belong together
  io_failure,         // file could not be read or written
  corrupt_payload,    // binary payload fails validation
  numeric_failure,    // loss or gradient became non-finite during training
  internal,           // invariant violation; indicates a bug, not bad input
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

  // Exit code contract: 1 = usage, 2 = data/validation, 3 = numeric.
  int exit_code() const {
    switch (code_) {
    case ErrorCode::usage:
      return 1;
    case ErrorCode::numeric_failure:
      return 3;
    default:
      return 2;
    }
  }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) {
    fail(code, message);
  }
}

const char* error_code_name(ErrorCode code);

} // namespace ctnn
