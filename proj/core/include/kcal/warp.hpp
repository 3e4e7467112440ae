#pragma once

#include <cstddef>

#include "kcal/homography.hpp"
#include "kcal/raster.hpp"

namespace kcal {

enum class Interpolation { bilinear, nearest };

/// Inverse-mapping warp: out(p) = src(h^-1 p) for every output pixel p.
///
/// `h` maps source pixel coordinates to output pixel coordinates. Samples
/// falling outside the source are zero; bilinear sampling treats the source
/// as zero-padded.
template <typename T>
Raster<T> warp_raster(const Raster<T>& src, const Homography& h, std::size_t out_width,
                      std::size_t out_height, Interpolation interpolation);

/// Bilinear sample with zero padding at (x, y) in pixel coordinates.
template <typename T>
double sample_bilinear(const Raster<T>& src, double x, double y, std::size_t channel = 0);

}  // namespace kcal
