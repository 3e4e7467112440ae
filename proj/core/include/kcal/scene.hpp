#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "kcal/energy.hpp"
#include "kcal/homography.hpp"
#include "kcal/marker.hpp"
#include "kcal/raster.hpp"

namespace kcal {

enum class ShapeFamily { ellipse, blob, stack };

const char* to_string(ShapeFamily family);
ShapeFamily shape_family_from_string(const std::string& name);

/// A synthetic food type. energy_density is kcal per rectified-plane pixel.
struct FoodClass {
  std::string name;
  double energy_density = 1.0;
  Rgb base_color{0.8f, 0.6f, 0.4f};
  ShapeFamily shape_family = ShapeFamily::ellipse;
  double texture_amplitude = 0.3;
};

std::vector<FoodClass> default_food_classes();

struct SceneSpec {
  std::uint64_t seed = 7;
  std::size_t width = 64;
  std::size_t height = 64;
  int min_foods = 1;
  int max_foods = 4;
  std::vector<FoodClass> classes = default_food_classes();
  /// Perspective terms of H are drawn from U(-j, j) / extent.
  double perspective_jitter = 0.15;
  /// Food bounding radii are drawn from [min, max] * min(width, height).
  double min_food_radius = 0.06;
  double max_food_radius = 0.11;
  /// Off by default; when on, foods may overlap and later foods hide earlier ones.
  bool allow_occlusion = false;
  MarkerSpec marker = default_marker_spec(64, 64);

  /// Spec with the marker placed for the given extent.
  static SceneSpec with_extent(std::size_t width, std::size_t height);
  void validate() const;
};

/// Geometry of one generated food, in rectified-plane units.
struct SceneFood {
  std::string class_name;
  Eigen::Vector2d center;
  double plane_area = 0.0;
  double energy_jitter = 1.0;
};

/// Scene image with its energy distribution image and provenance.
struct PairedSample {
  std::string id;
  Raster<float> scene;  // RGB in [0, 1]
  EnergyImage energy;
  std::vector<FoodAnnotation> annotations;
  Homography homography;  // rectified plane -> scene pixels
  std::vector<SceneFood> foods;  // empty for loaded or augmented samples
};

/// Deterministic function of (spec.seed, index).
PairedSample sample_scene(const SceneSpec& spec, std::uint64_t index);

/// Closed-form expected plane area of a food of `family` under `spec`'s size
/// distribution (ignoring placement rejection).
double expected_food_area(const SceneSpec& spec, ShapeFamily family);

}  // namespace kcal
