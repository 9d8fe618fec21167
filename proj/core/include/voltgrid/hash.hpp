#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace voltgrid {

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

}  // namespace voltgrid
