#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace olapsim {

// All randomness in a run flows from one master seed. Each consumer draws
// from a named sub-stream so that enabling/disabling one randomized
// component (arrivals, degradation, softmax, ...) does not perturb the
// draws seen by the others.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t stream_seed(uint64_t master, std::string_view stream) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream label
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ h);
}

inline std::mt19937_64 make_stream(uint64_t master, std::string_view stream) {
  return std::mt19937_64(stream_seed(master, stream));
}

}  // namespace olapsim
