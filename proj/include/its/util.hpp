#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace its {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

bool is_valid_utf8(std::string_view text);

std::string_view trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

// Replaces every run of whitespace with a single space and trims both ends.
std::string collapse_whitespace(std::string_view text);

std::vector<std::string> split_lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Current UTC time as ISO-8601. Honors SOURCE_DATE_EPOCH when set.
std::string utc_timestamp();

// Hundredths of a percent, rounded half-up: 23/30 -> 7667.
std::int64_t percent_basis_points(std::int64_t numerator, std::int64_t denominator);

// 7667 -> "76.67".
std::string format_basis_points(std::int64_t basis_points);

// Fraction rounded half-up to three decimals: 24/30 -> "0.800".
std::string format_fraction3(std::int64_t numerator, std::int64_t denominator);

}  // namespace its
