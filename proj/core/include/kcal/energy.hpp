#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kcal/homography.hpp"
#include "kcal/raster.hpp"
#include "kcal/warp.hpp"

namespace kcal {

using Mask = Raster<std::uint8_t>;

/// Per-pixel kcal mass, pixel-aligned with a scene image. Single channel.
using EnergyImage = Raster<double>;

/// One annotated food item: its scene-space mask and ground-truth energy.
struct FoodAnnotation {
  std::string label;
  Mask mask;
  double energy_kcal = 0.0;

  /// Throws EmptyMaskError / ContractError when the invariants fail.
  void validate() const;
};

struct PixelIndex {
  long row;
  long col;
};

/// Food support in the rectified plane with its centroid and pixel count.
class RectifiedMask {
 public:
  /// Nonzero pixels of `mask` form the support. Throws EmptyMaskError.
  static RectifiedMask from_raster(const Mask& mask);

  const std::vector<PixelIndex>& support() const noexcept { return support_; }
  /// (row, col) mean of the support.
  const Eigen::Vector2d& centroid() const noexcept { return centroid_; }
  /// Number of support pixels.
  double phi() const noexcept { return static_cast<double>(support_.size()); }
  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }

 private:
  std::vector<PixelIndex> support_;
  Eigen::Vector2d centroid_ = Eigen::Vector2d::Zero();
  std::size_t width_ = 0;
  std::size_t height_ = 0;
};

/// Distance-to-centroid weights 1 / (d + sqrt(phi)) on the support, zero elsewhere.
Raster<double> rectified_scale_factors(const RectifiedMask& mask);

/// rho = energy / sum(weights). Throws CalibrationError when the sum is not positive.
double calibrate_rho(const Raster<double>& projected_weights, double energy_kcal);

/// Pointwise rho * w (zero stays zero).
Raster<double> apply_rho(const Raster<double>& weights, double rho);

struct FoodEnergy {
  Raster<double> weights;  // calibrated, scene coordinates
  double rho = 0.0;
  double rectified_phi = 0.0;
};

/// Full construction for one food: rectify the mask through h^-1, assign
/// distance weights, project back through h, restrict to the scene mask, and
/// calibrate the sum to `energy_kcal`.
FoodEnergy build_food_energy(const Mask& mask, double energy_kcal, const Homography& h,
                             Interpolation back_projection = Interpolation::bilinear);

/// Sum of build_food_energy over all annotations (overlaps add).
/// CalibrationError carries the index of the failing food.
EnergyImage build_energy_image(std::size_t width, std::size_t height,
                               const std::vector<FoodAnnotation>& annotations, const Homography& h,
                               Interpolation back_projection = Interpolation::bilinear);

template <typename Scene>
EnergyImage build_energy_image(const Raster<Scene>& scene, const std::vector<FoodAnnotation>& annotations,
                               const Homography& h,
                               Interpolation back_projection = Interpolation::bilinear) {
  return build_energy_image(scene.width(), scene.height(), annotations, h, back_projection);
}

/// Total kcal: the sum of every pixel.
double estimate_energy(const EnergyImage& prediction);

/// Signed relative error (sum(pred) - sum(truth)) / sum(truth).
double error_rate(const EnergyImage& prediction, const EnergyImage& truth);

struct ErrorSummary {
  double mean_signed = 0.0;
  double mean_abs = 0.0;
  std::size_t count = 0;
};

ErrorSummary summarize_errors(std::span<const double> signed_errors);

}  // namespace kcal
