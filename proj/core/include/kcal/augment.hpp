#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kcal/rng.hpp"
#include "kcal/scene.hpp"

namespace kcal {

struct CropRect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  bool operator==(const CropRect&) const = default;
};

/// Geometric transform applied jointly to a scene, its energy image and masks.
///
/// Rotations are clockwise. random_crop is a recipe: resolve() turns it into
/// a concrete crop whose side lengths are a uniform fraction in
/// [min_crop_fraction, max_crop_fraction] of the source extent.
struct AugmentationOp {
  enum class Kind { rotate90, rotate180, rotate270, flip_h, flip_v, crop, random_crop };

  Kind kind = Kind::flip_h;
  CropRect rect;
  double min_crop_fraction = 0.7;
  double max_crop_fraction = 0.9;

  static AugmentationOp of(Kind k) {
    AugmentationOp op;
    op.kind = k;
    return op;
  }
  static AugmentationOp rotate90() { return of(Kind::rotate90); }
  static AugmentationOp rotate180() { return of(Kind::rotate180); }
  static AugmentationOp rotate270() { return of(Kind::rotate270); }
  static AugmentationOp flip_h() { return of(Kind::flip_h); }
  static AugmentationOp flip_v() { return of(Kind::flip_v); }
  static AugmentationOp crop(CropRect r) {
    AugmentationOp op = of(Kind::crop);
    op.rect = r;
    return op;
  }
  static AugmentationOp random_crop() { return of(Kind::random_crop); }

  AugmentationOp resolve(std::size_t width, std::size_t height, RandomStream& rng) const;

  /// "rotate90", "flip_h", "crop(x,y,w,h)", "random_crop" ...
  std::string describe() const;
  static AugmentationOp parse(const std::string& text);

  bool operator==(const AugmentationOp&) const = default;
};

/// Applies `op` to every raster of the pair. Rotations and flips permute
/// pixels, so totals are preserved exactly. A crop keeps the annotations whose
/// mask survives with positive energy and resets each energy_kcal to the sum
/// of the cropped energy image over its mask. The homography is updated so it
/// still maps the rectified plane to the transformed scene.
///
/// Throws EmptySampleError when a crop removes every food, ContractError for
/// an unresolved random_crop or a rectangle outside the extent.
PairedSample augment(const PairedSample& sample, const AugmentationOp& op);

/// Zero-pads the pair to (width, height) with the content centered.
PairedSample pad_to(const PairedSample& sample, std::size_t width, std::size_t height);

/// The first `count` ops of the cycle rotate90, rotate180, rotate270, flip_h,
/// flip_v, random_crop x4 (further entries are random crops).
std::vector<AugmentationOp> default_augment_plan(std::size_t count = 9);

}  // namespace kcal
