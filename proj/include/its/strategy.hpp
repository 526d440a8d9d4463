#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace its {

// Query-augmentation strategies. kNone leaves the query untouched; the other
// three prepend a persona that is related to the query, unrelated to it, or
// drawn from a randomly chosen domain.
enum class Strategy { kNone, kSimilar, kDissimilar, kRandom };

// Table/row order used for rendering and tie-breaking: N, R, S, D.
inline constexpr std::array<Strategy, 4> kStrategyOrder = {
    Strategy::kNone, Strategy::kRandom, Strategy::kSimilar, Strategy::kDissimilar};

// Single-letter tag: "N", "S", "D" or "R".
std::string_view tag(Strategy s);
std::string_view long_name(Strategy s);

// Accepts tags (case-insensitive) and long names such as "persona-similar".
std::optional<Strategy> parse_strategy(std::string_view text);

// Throws its::Error(kUsage) on unknown input.
Strategy strategy_from_string(std::string_view text);

// Position in kStrategyOrder.
int order_rank(Strategy s);

}  // namespace its
