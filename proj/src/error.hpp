#pragma once

#include <stdexcept>
#include <string>

namespace wsnad {

enum class ErrorCode {
  kInvalidArgument,
  kInput,
  kDimension,
  kContract,
  kDegenerateRow,
  kNonFinite,
  kConstantSeries,
  kMissingNode,
  kCheckpoint,
  kConfig,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the core carries one of the codes above; the C API
/// maps them one-to-one onto status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace wsnad
