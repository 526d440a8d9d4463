#include "its/strategy.hpp"

#include "its/error.hpp"
#include "its/util.hpp"

namespace its {

std::string_view tag(Strategy s) {
  switch (s) {
    case Strategy::kNone: return "N";
    case Strategy::kSimilar: return "S";
    case Strategy::kDissimilar: return "D";
    case Strategy::kRandom: return "R";
  }
  return "?";
}

std::string_view long_name(Strategy s) {
  switch (s) {
    case Strategy::kNone: return "no-persona";
    case Strategy::kSimilar: return "persona-similar";
    case Strategy::kDissimilar: return "persona-dissimilar";
    case Strategy::kRandom: return "persona-random";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  const auto lower = to_lower_ascii(trim(text));
  for (auto s : kStrategyOrder) {
    if (lower == to_lower_ascii(tag(s)) || lower == long_name(s)) return s;
  }
  return std::nullopt;
}

Strategy strategy_from_string(std::string_view text) {
  if (auto s = parse_strategy(text)) return *s;
  throw Error(ErrorCode::kUsage,
              "unknown strategy '" + std::string(text) + "' (expected N, S, D or R)");
}

int order_rank(Strategy s) {
  for (int i = 0; i < static_cast<int>(kStrategyOrder.size()); ++i) {
    if (kStrategyOrder[i] == s) return i;
  }
  return -1;
}

}  // namespace its
