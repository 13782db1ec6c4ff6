// SPDX-License-Identifier: Apache-2.0
#include "seqpress/rng.hpp"

#include <cmath>
#include <numbers>

namespace seqpress {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5EEDBA5Eull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_(stream) {}

std::uint32_t CounterRng::next_u32() {
  if (used_ == 4) {
    buffer_ = philox4x32_10({static_cast<std::uint32_t>(block_),
                             static_cast<std::uint32_t>(block_ >> 32),
                             static_cast<std::uint32_t>(stream_),
                             static_cast<std::uint32_t>(stream_ >> 32)},
                            key_);
    ++block_;
    used_ = 0;
  }
  return buffer_[used_++];
}

std::uint64_t CounterRng::next_u64() {
  std::uint64_t hi = next_u32();
  std::uint64_t lo = next_u32();
  return (hi << 32) | lo;
}

double CounterRng::uniform() {
  std::uint64_t k = next_u64() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double CounterRng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t CounterRng::below(std::size_t n) {
  // Lemire-style rejection keeps the draw unbiased.
  std::uint64_t bound = n;
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

}  // namespace seqpress
