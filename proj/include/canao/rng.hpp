#pragma once

#include <cstdint>

namespace canao {

// Stateless 64-bit mixer used to derive independent seeds.
constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for item `index` of stream `stream`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(seed ^ splitmix(stream * 0x100000001b3ULL ^ splitmix(index + 1)));
}

}  // namespace canao
