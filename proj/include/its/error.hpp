#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace its {

enum class ErrorCode {
  kUsage,          // bad arguments or preconditions
  kConfig,         // invalid or unresolvable configuration
  kParse,          // malformed input file
  kDuplicate,      // duplicate id / key
  kNotFound,       // missing file, id or key
  kTransport,      // network failure talking to an endpoint
  kHttpStatus,     // endpoint answered with a failing status
  kBadResponse,    // endpoint answered with an unusable body
  kGeneration,     // model output unusable for its purpose
  kInterrupted,    // cooperative cancellation
  kIo,             // filesystem failure
};

std::string_view to_string(ErrorCode code);

// Exit status the CLI reports for an error of this kind.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int http_status = 0)
      : std::runtime_error(message), code_(code), http_status_(http_status) {}

  ErrorCode code() const noexcept { return code_; }
  // Last HTTP status for kHttpStatus errors, otherwise 0.
  int http_status() const noexcept { return http_status_; }

 private:
  ErrorCode code_;
  int http_status_;
};

}  // namespace its
