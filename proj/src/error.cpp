#include "its/error.hpp"

namespace its {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kHttpStatus: return "http_status";
    case ErrorCode::kBadResponse: return "bad_response";
    case ErrorCode::kGeneration: return "generation";
    case ErrorCode::kInterrupted: return "interrupted";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
    case ErrorCode::kConfig:
      return 1;
    default:
      return 2;
  }
}

}  // namespace its
