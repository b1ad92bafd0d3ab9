#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

namespace s2r {

using TokenSeq = std::vector<std::string>;
using IdSeq = std::vector<int>;

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kBos = "<bos>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kBlank = "<blank>";

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits, so draws are
/// identical across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Index in [0, n); n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

/// Fisher-Yates with uniform_index; std::shuffle is not portable across
/// standard libraries.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

struct DialoguePair {
  std::int64_t id = 0;
  TokenSeq query;
  TokenSeq response;
};

}  // namespace s2r
