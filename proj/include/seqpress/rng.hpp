// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace seqpress {

/// Philox4x32-10 block function (Salmon et al., Random123).
/// Pure function of (counter, key); used so datasets can be regenerated
/// bit-exactly from (seed, indices) in any language.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Sequential stream over Philox blocks.
///
/// The key is the 64-bit seed (low word first). The counter is
/// (block_lo, block_hi, stream_lo, stream_hi) where stream is a caller-chosen
/// 64-bit stream id and block increments per 128 bits consumed. Uniforms take
/// the top 53 bits of two consecutive 32-bit words (first word high) and map
/// k -> (k + 0.5) * 2^-53, so they lie strictly in (0, 1). Normals use the
/// Box-Muller cosine branch on two consecutive uniforms, one normal per pair.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Mixes several indices into one 64-bit stream id (splitmix64 finalizer chain).
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

/// Fisher-Yates shuffle driven by CounterRng; identical across platforms.
template <class T>
void shuffle(std::vector<T>& items, CounterRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace seqpress
