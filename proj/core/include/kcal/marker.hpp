#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <vector>

#include "kcal/homography.hpp"
#include "kcal/raster.hpp"

namespace kcal {

using Rgb = std::array<float, 3>;

/// 5 x 4 color checkerboard laid out on the rectified plane.
///
/// Square (r, c) is dark when r + c is even; light squares cycle through
/// `light_palette` in row-major order. All light colors share the same
/// maximum channel so the board is a clean two-level pattern in max(R, G, B).
struct MarkerSpec {
  int cols = 5;
  int rows = 4;
  double square_size = 5.0;
  Eigen::Vector2d origin{0.0, 0.0};  // plane coordinates of the outer top-left corner
  Rgb dark{0.04f, 0.04f, 0.04f};
  std::array<Rgb, 4> light_palette{{{0.90f, 0.15f, 0.15f},
                                    {0.15f, 0.90f, 0.20f},
                                    {0.15f, 0.30f, 0.90f},
                                    {0.90f, 0.85f, 0.10f}}};

  bool is_dark(int row, int col) const { return (row + col) % 2 == 0; }
  Rgb square_color(int row, int col) const;
  /// Marker color at a plane point, or nothing outside the board.
  std::optional<Rgb> color_at(const Eigen::Vector2d& plane_point) const;

  int inner_corner_count() const { return (rows - 1) * (cols - 1); }
  /// Inner corners in plane coordinates, row-major in marker-local order.
  std::vector<Eigen::Vector2d> inner_corners() const;
  Eigen::Vector2d square_center(int row, int col) const;
  std::array<Eigen::Vector2d, 4> outline() const;
};

/// Board placement used by the scene generator for a given raster extent.
MarkerSpec default_marker_spec(std::size_t width, std::size_t height);

struct MarkerDetection {
  std::vector<Eigen::Vector2d> corner_points;  // scene pixels, row-major
  double confidence = 0.0;                     // fraction of squares whose color matches
};

/// Locates the board in an RGB raster (values in [0, 1]).
///
/// Dark squares are found as connected components and assigned to board
/// cells by their principal axes (the square parity fixes the orientation);
/// a DLT fit predicts the inner corners, which are refined to sub-pixel
/// precision by a quadratic fit on a saddle-point response. Throws
/// DetectionError when no board consistent with `spec` is found.
MarkerDetection detect_marker(const Raster<float>& rgb, const MarkerSpec& spec);

}  // namespace kcal
