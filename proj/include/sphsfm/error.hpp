#pragma once

#include <stdexcept>
#include <string>

namespace sphsfm {

enum class ErrorCode {
  InvalidArgument,
  NonFinite,
  ProjectionAtCenter,
  Degenerate,
  NoConsensus,
  CheiralityFailure,
  NoParallax,
  BehindRay,
  InsufficientMatches,
  NoSeed,
  SeedCollapse,
  NoCandidate,
  Io,
  Format,
};

const char* to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type;
// callers switch on code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sphsfm
