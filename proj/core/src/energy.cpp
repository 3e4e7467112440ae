#include "kcal/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kcal/error.hpp"

namespace kcal {

void FoodAnnotation::validate() const {
  if (!(energy_kcal > 0.0) || !std::isfinite(energy_kcal)) {
    throw ContractError("food '" + label + "': energy_kcal must be positive");
  }
  if (std::none_of(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v != 0; })) {
    throw EmptyMaskError("food '" + label + "': mask has no set pixel");
  }
}

RectifiedMask RectifiedMask::from_raster(const Mask& mask) {
  RectifiedMask out;
  out.width_ = mask.width();
  out.height_ = mask.height();
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (std::size_t r = 0; r < mask.height(); ++r)
    for (std::size_t c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) continue;
      out.support_.push_back({static_cast<long>(r), static_cast<long>(c)});
      acc += Eigen::Vector2d(static_cast<double>(r), static_cast<double>(c));
    }
  if (out.support_.empty()) throw EmptyMaskError("rectified mask is empty");
  out.centroid_ = acc / static_cast<double>(out.support_.size());
  return out;
}

Raster<double> rectified_scale_factors(const RectifiedMask& mask) {
  if (mask.support().empty()) throw EmptyMaskError("rectified mask is empty");
  Raster<double> w(mask.width(), mask.height());
  const double reg = std::sqrt(mask.phi());
  for (const auto& p : mask.support()) {
    const double di = static_cast<double>(p.row) - mask.centroid().x();
    const double dj = static_cast<double>(p.col) - mask.centroid().y();
    w.at(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col)) = 1.0 / (std::sqrt(di * di + dj * dj) + reg);
  }
  return w;
}

double calibrate_rho(const Raster<double>& projected_weights, double energy_kcal) {
  const double total = raster_sum(projected_weights);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw CalibrationError("energy calibration: projected weights sum to " + std::to_string(total));
  }
  return energy_kcal / total;
}

Raster<double> apply_rho(const Raster<double>& weights, double rho) {
  if (!(rho > 0.0)) throw ContractError("apply_rho: rho must be positive");
  Raster<double> out = weights;
  for (auto& v : out.data()) v *= rho;
  return out;
}

FoodEnergy build_food_energy(const Mask& mask, double energy_kcal, const Homography& h,
                             Interpolation back_projection) {
  // Rectified bounding box of the mask's pixel footprint.
  long rmin = std::numeric_limits<long>::max(), rmax = -1, cmin = std::numeric_limits<long>::max(), cmax = -1;
  for (std::size_t r = 0; r < mask.height(); ++r)
    for (std::size_t c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) continue;
      rmin = std::min(rmin, static_cast<long>(r));
      rmax = std::max(rmax, static_cast<long>(r));
      cmin = std::min(cmin, static_cast<long>(c));
      cmax = std::max(cmax, static_cast<long>(c));
    }
  if (rmax < 0) throw EmptyMaskError("food mask is empty");
  const Homography rectify = h.inverse();
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  for (double y : {rmin - 0.5, rmax + 0.5})
    for (double x : {cmin - 0.5, cmax + 0.5}) {
      const Eigen::Vector2d p = rectify.apply({x, y});
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  const double ox = std::floor(xmin) - 1.0, oy = std::floor(ymin) - 1.0;
  const double pw = std::ceil(xmax) - ox + 2.0, ph = std::ceil(ymax) - oy + 2.0;
  if (!(pw > 0 && ph > 0) || pw > 8192 || ph > 8192) {
    throw CalibrationError("rectified food footprint is unbounded; homography too extreme");
  }
  const Homography to_local = Homography::translation(-ox, -oy) * rectify;

  const Mask rectified = warp_raster(mask, to_local, static_cast<std::size_t>(pw), static_cast<std::size_t>(ph),
                                     Interpolation::nearest);
  const RectifiedMask support = RectifiedMask::from_raster(rectified);
  const Raster<double> local_weights = rectified_scale_factors(support);

  Raster<double> projected = warp_raster(local_weights, to_local.inverse(), mask.width(), mask.height(),
                                         back_projection);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    if (mask.data()[i] == 0) projected.data()[i] = 0.0;
  }
  FoodEnergy out;
  out.rho = calibrate_rho(projected, energy_kcal);
  out.weights = apply_rho(projected, out.rho);
  out.rectified_phi = support.phi();
  return out;
}

EnergyImage build_energy_image(std::size_t width, std::size_t height,
                               const std::vector<FoodAnnotation>& annotations, const Homography& h,
                               Interpolation back_projection) {
  if (annotations.empty()) throw ContractError("build_energy_image: no annotations");
  EnergyImage image(width, height, 1, 0.0);
  for (std::size_t k = 0; k < annotations.size(); ++k) {
    const auto& food = annotations[k];
    if (food.mask.width() != width || food.mask.height() != height) {
      throw DimensionError("food " + std::to_string(k) + " mask extent differs from scene");
    }
    FoodEnergy fe;
    try {
      food.validate();
      fe = build_food_energy(food.mask, food.energy_kcal, h, back_projection);
    } catch (const CalibrationError& e) {
      throw CalibrationError("food " + std::to_string(k) + " ('" + food.label + "'): " + e.what(),
                             static_cast<int>(k));
    } catch (const EmptyMaskError& e) {
      throw CalibrationError("food " + std::to_string(k) + " ('" + food.label + "'): " + e.what(),
                             static_cast<int>(k));
    }
    for (std::size_t i = 0; i < image.size(); ++i) image.data()[i] += fe.weights.data()[i];
  }
  return image;
}

double estimate_energy(const EnergyImage& prediction) { return raster_sum(prediction); }

double error_rate(const EnergyImage& prediction, const EnergyImage& truth) {
  if (!prediction.same_extent(truth) || prediction.channels() != truth.channels()) {
    throw DimensionError("error_rate: prediction and truth extents differ");
  }
  const double t = estimate_energy(truth);
  if (!(t > 0.0)) throw UndefinedMetricError("error_rate: ground-truth energy is zero");
  return (estimate_energy(prediction) - t) / t;
}

ErrorSummary summarize_errors(std::span<const double> signed_errors) {
  ErrorSummary s;
  s.count = signed_errors.size();
  if (s.count == 0) return s;
  for (double e : signed_errors) {
    s.mean_signed += e;
    s.mean_abs += std::abs(e);
  }
  s.mean_signed /= static_cast<double>(s.count);
  s.mean_abs /= static_cast<double>(s.count);
  return s;
}

}  // namespace kcal
