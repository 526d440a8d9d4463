#pragma once

#include <optional>
#include <string>

namespace its {

// Model output for one test question within an evaluation run.
struct Completion {
  std::string query_id;
  std::string rendered_query;
  std::string text;
  std::string finish_reason;
  std::size_t token_estimate = 0;
  std::optional<std::string> error;  // request failed; graded as incorrect

  bool operator==(const Completion&) const = default;
};

}  // namespace its
