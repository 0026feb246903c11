#pragma once

#include <cstddef>
#include <cstring>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nfw/timetag.hpp"

namespace testing_support {

inline std::vector<std::byte> bytes_of(std::string_view s) {
  std::vector<std::byte> b(s.size());
  std::memcpy(b.data(), s.data(), s.size());
  return b;
}

inline std::string text_of(const std::vector<std::byte>& b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

/// Sorted two-channel stream with random gaps; cross-channel ties occur.
inline nfw::TagStream random_stream(std::mt19937_64& rng, std::size_t n, nfw::Picoseconds max_gap = 5000) {
  std::uniform_int_distribution<nfw::Picoseconds> gap(0, max_gap);
  std::bernoulli_distribution ch(0.5);
  std::vector<nfw::TimeTag> tags;
  tags.reserve(n);
  nfw::Picoseconds last[2] = {-1, -1};
  nfw::Picoseconds t = 0;
  while (tags.size() < n) {
    t += gap(rng);
    const auto c = static_cast<std::uint8_t>(ch(rng));
    if (t <= last[c]) continue;
    last[c] = t;
    tags.push_back({t, c});
  }
  nfw::StreamMeta meta;
  meta.duration = tags.empty() ? 0 : tags.back().time;
  return nfw::TagStream(std::move(tags), meta);
}

}  // namespace testing_support
