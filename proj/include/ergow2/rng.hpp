#pragma once

#include "ergow2/common.hpp"

#include <array>
#include <cmath>
#include <cstdint>

namespace ergow2 {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (seed, stream, step, slot), so coupled paths and parallel replications are
// reproducible independent of scheduling or evaluation order.
namespace philox {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> block(std::uint64_t key, std::uint64_t ctr_hi, std::uint64_t ctr_lo) {
  std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
  std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
  std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(0xD2511F53u, c0, hi0, lo0);
    mulhilo(0xCD9E8D57u, c2, hi1, lo1);
    std::uint32_t n0 = hi1 ^ c1 ^ k0;
    std::uint32_t n1 = lo1;
    std::uint32_t n2 = hi0 ^ c3 ^ k1;
    std::uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return {c0, c1, c2, c3};
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  std::uint64_t r = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(r >> 11) * 0x1.0p-53;  // [0,1)
}

}  // namespace philox

// Stream ids carry a purpose salt so independent uses of the same seed and
// replication index never collide.
enum class StreamPurpose : std::uint8_t {
  Path = 1,
  Warm = 2,
  Invariant = 3,
  Pairs = 4,
  Bootstrap = 5,
  Coboundary = 6,
  Concentration = 7,
  Averaging = 8,
  Thinning = 9,
};

inline std::uint64_t make_stream(StreamPurpose p, std::uint64_t idx) {
  return (static_cast<std::uint64_t>(p) << 40) | (idx & 0xFFFFFFFFFFull);
}

class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  // Uniform in [0,1), one of two values per (step, pair) block.
  double uniform(std::uint64_t step, std::uint32_t slot) const {
    auto w = raw(step, slot >> 1);
    return (slot & 1u) ? philox::to_unit(w[2], w[3]) : philox::to_unit(w[0], w[1]);
  }

  // Standard normal via Box-Muller on a Philox block; slots 2k and 2k+1 share
  // a block and give the cosine/sine halves.
  double normal(std::uint64_t step, std::uint32_t slot) const {
    auto w = raw(step, slot >> 1);
    double u1 = 1.0 - philox::to_unit(w[0], w[1]);  // (0,1]
    double u2 = philox::to_unit(w[2], w[3]);
    double r = std::sqrt(-2.0 * std::log(u1));
    double phi = 2.0 * M_PI * u2;
    return (slot & 1u) ? r * std::sin(phi) : r * std::cos(phi);
  }

  void fill_normal(std::uint64_t step, Vec& out) const {
    for (int k = 0; k < out.size(); ++k) out[k] = normal(step, static_cast<std::uint32_t>(k));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::array<std::uint32_t, 4> raw(std::uint64_t step, std::uint32_t pair) const {
    // counter = (step | stream48 | pair16); stream ids are 48 bits by construction.
    std::uint64_t hi = (stream_ << 16) | (pair & 0xFFFFu);
    return philox::block(seed_, hi, step);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace ergow2
