#pragma once

#include <cstdint>
#include <string_view>

namespace skillrec {

// 64-bit FNV-1a. Stable across platforms and runs; used wherever a hash ends
// up in a persisted artifact or a feature index.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace skillrec
