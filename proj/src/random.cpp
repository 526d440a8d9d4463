#include "its/random.hpp"

#include <string>

#include "its/util.hpp"

namespace its {

std::uint64_t keyed_seed(std::uint64_t seed, std::string_view key) {
  std::string material = std::to_string(seed);
  material.push_back('\0');
  material.append(key);
  const auto digest = sha256_hex(material);
  return std::stoull(digest.substr(0, 16), nullptr, 16);
}

}  // namespace its
