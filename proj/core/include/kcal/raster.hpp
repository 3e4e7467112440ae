#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kcal/error.hpp"

namespace kcal {

/// Row-major, channel-interleaved 2-D raster.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(std::size_t width, std::size_t height, std::size_t channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels), data_(width * height * channels, fill) {}
  Raster(std::size_t width, std::size_t height, std::size_t channels, std::vector<T> values)
      : width_(width), height_(height), channels_(channels), data_(std::move(values)) {
    if (data_.size() != width * height * channels) {
      throw DimensionError("raster " + std::to_string(width) + "x" + std::to_string(height) + "x" +
                           std::to_string(channels) + " cannot hold " + std::to_string(data_.size()) +
                           " values");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  const T& at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  template <typename U>
  bool same_extent(const Raster<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

template <typename T>
double raster_sum(const Raster<T>& r) {
  double acc = 0;
  for (const T& v : r.data()) acc += static_cast<double>(v);
  return acc;
}

template <typename To, typename From>
Raster<To> raster_cast(const Raster<From>& r) {
  Raster<To> out(r.width(), r.height(), r.channels());
  auto src = r.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

}  // namespace kcal
