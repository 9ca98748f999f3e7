#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace blockforge {

// Lowercase hex digests backed by OpenSSL.
std::string sha1_hex(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);

// Stable 64-bit mixing used for shingles, MinHash permutations and
// fingerprint shapes. Never changes across releases: dedup decisions
// persisted by one version must be reproducible by the next.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over bytes, then mixed.
constexpr std::uint64_t hash_bytes(std::string_view s, std::uint64_t seed = 0) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

}  // namespace blockforge
