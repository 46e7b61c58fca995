#pragma once

#include <stdexcept>
#include <string>

namespace sdgt {

enum class ErrorCode {
  kInvalidArgument = 1,
  kDisconnected = 2,
  kSingular = 3,
  kDiverged = 4,
  kIo = 5,
  kParse = 6,
  kCheckFailed = 7,
  kInternal = 99,
};

// All library failures surface as this type; the C layer turns the code into
// the integer status it returns.
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

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace sdgt
