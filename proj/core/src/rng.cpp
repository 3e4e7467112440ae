#include "kcal/rng.hpp"

#include <cmath>
#include <numbers>

namespace kcal {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) noexcept : key_(mix64(seed + kGolden)) {}

RandomStream::RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
    : RandomStream(seed) {
  for (std::uint64_t tag : path) key_ = derive(tag).key_;
}

RandomStream RandomStream::derive(std::uint64_t tag) const noexcept {
  RandomStream child;
  child.key_ = mix64(key_ ^ mix64(tag + 0xD1B54A32D192ED03ULL));
  return child;
}

std::uint64_t RandomStream::next_u64() noexcept {
  ++position_;
  return mix64(key_ + position_ * kGolden);
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::int64_t RandomStream::uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  return lo + static_cast<std::int64_t>(next_u64() % span);
}

double RandomStream::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

}  // namespace kcal
