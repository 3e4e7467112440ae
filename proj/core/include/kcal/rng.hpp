#pragma once

#include <cstdint>
#include <initializer_list>

namespace kcal {

/// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Portable counter-based random stream.
///
/// A stream is identified by a 64-bit key derived from (seed, path...). The
/// value at position i is mix64(key + (i + 1) * 0x9E3779B97F4A7C15), i.e. the
/// SplitMix64 sequence started at `key`. Streams never depend on platform
/// generators, so datasets and training runs are reproducible everywhere the
/// C++ floating-point math library agrees.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t seed) noexcept;
  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

  /// Independent child stream keyed by this stream's key and `tag`.
  RandomStream derive(std::uint64_t tag) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return position_; }
  void seek(std::uint64_t position) noexcept { position_ = position; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  /// Standard normal via Box-Muller (one value per two draws).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t position_ = 0;
};

}  // namespace kcal
