#pragma once

#include <cstdint>
#include <string_view>

namespace xprospect {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a purpose tag
/// ("init/<param>", "shuffle", "phantom", ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(root ^ splitmix64(h));
}

}  // namespace xprospect
