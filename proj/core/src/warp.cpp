#include "kcal/warp.hpp"

#include <cmath>
#include <cstdint>

namespace kcal {

template <typename T>
double sample_bilinear(const Raster<T>& src, double x, double y, std::size_t channel) {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const double ax = x - fx0, ay = y - fy0;
  const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
  const long w = static_cast<long>(src.width()), h = static_cast<long>(src.height());
  auto px = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
    return static_cast<double>(src.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), channel));
  };
  double v = 0;
  if ((1 - ax) * (1 - ay) != 0) v += (1 - ax) * (1 - ay) * px(y0, x0);
  if (ax * (1 - ay) != 0) v += ax * (1 - ay) * px(y0, x0 + 1);
  if ((1 - ax) * ay != 0) v += (1 - ax) * ay * px(y0 + 1, x0);
  if (ax * ay != 0) v += ax * ay * px(y0 + 1, x0 + 1);
  return v;
}

template <typename T>
Raster<T> warp_raster(const Raster<T>& src, const Homography& h, std::size_t out_width,
                      std::size_t out_height, Interpolation interpolation) {
  if (out_width == 0 || out_height == 0) throw ContractError("warp_raster: output extent must be positive");
  Raster<T> out(out_width, out_height, src.channels());
  const Eigen::Matrix3d inv = h.inverse().matrix();
  const long w = static_cast<long>(src.width()), hgt = static_cast<long>(src.height());
  for (std::size_t row = 0; row < out_height; ++row) {
    for (std::size_t col = 0; col < out_width; ++col) {
      const Eigen::Vector3d q = inv * Eigen::Vector3d(static_cast<double>(col), static_cast<double>(row), 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const double x = q.x() / q.z(), y = q.y() / q.z();
      if (interpolation == Interpolation::nearest) {
        const double rx = std::floor(x + 0.5), ry = std::floor(y + 0.5);
        if (rx < 0 || ry < 0 || rx >= static_cast<double>(w) || ry >= static_cast<double>(hgt)) continue;
        for (std::size_t ch = 0; ch < src.channels(); ++ch) {
          out.at(row, col, ch) = src.at(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx), ch);
        }
      } else {
        if (x <= -1.0 || y <= -1.0 || x >= static_cast<double>(w) || y >= static_cast<double>(hgt)) continue;
        for (std::size_t ch = 0; ch < src.channels(); ++ch) {
          out.at(row, col, ch) = static_cast<T>(sample_bilinear(src, x, y, ch));
        }
      }
    }
  }
  return out;
}

template Raster<float> warp_raster(const Raster<float>&, const Homography&, std::size_t, std::size_t, Interpolation);
template Raster<double> warp_raster(const Raster<double>&, const Homography&, std::size_t, std::size_t, Interpolation);
template Raster<std::uint8_t> warp_raster(const Raster<std::uint8_t>&, const Homography&, std::size_t, std::size_t,
                                          Interpolation);
template double sample_bilinear(const Raster<float>&, double, double, std::size_t);
template double sample_bilinear(const Raster<double>&, double, double, std::size_t);

}  // namespace kcal
