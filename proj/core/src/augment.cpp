#include "kcal/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/LU>

#include "kcal/error.hpp"

namespace kcal {

namespace {

using Kind = AugmentationOp::Kind;

// Pixel-exact geometric map between source and output rasters.
struct PixelMap {
  std::size_t out_w = 0, out_h = 0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();  // source (x, y, 1) -> output
  Eigen::Matrix3d ti = Eigen::Matrix3d::Identity();

  // Source pixel for an output pixel, or false when it falls outside.
  bool source(std::size_t r, std::size_t c, std::size_t src_w, std::size_t src_h, std::size_t& sr,
              std::size_t& sc) const {
    const double x = ti(0, 0) * c + ti(0, 1) * r + ti(0, 2);
    const double y = ti(1, 0) * c + ti(1, 1) * r + ti(1, 2);
    const long ix = std::lround(x), iy = std::lround(y);
    if (ix < 0 || iy < 0 || ix >= static_cast<long>(src_w) || iy >= static_cast<long>(src_h)) return false;
    sc = static_cast<std::size_t>(ix);
    sr = static_cast<std::size_t>(iy);
    return true;
  }
};

PixelMap make_map(const Eigen::Matrix3d& t, std::size_t out_w, std::size_t out_h) {
  PixelMap m;
  m.out_w = out_w;
  m.out_h = out_h;
  m.t = t;
  m.ti = t.inverse();
  return m;
}

PixelMap map_for(const AugmentationOp& op, std::size_t w, std::size_t h) {
  const double wm = static_cast<double>(w) - 1, hm = static_cast<double>(h) - 1;
  Eigen::Matrix3d t;
  switch (op.kind) {
    case Kind::rotate90:  // x' = (h-1) - y, y' = x
      t << 0, -1, hm, 1, 0, 0, 0, 0, 1;
      return make_map(t, h, w);
    case Kind::rotate180:
      t << -1, 0, wm, 0, -1, hm, 0, 0, 1;
      return make_map(t, w, h);
    case Kind::rotate270:  // x' = y, y' = (w-1) - x
      t << 0, 1, 0, -1, 0, wm, 0, 0, 1;
      return make_map(t, h, w);
    case Kind::flip_h:
      t << -1, 0, wm, 0, 1, 0, 0, 0, 1;
      return make_map(t, w, h);
    case Kind::flip_v:
      t << 1, 0, 0, 0, -1, hm, 0, 0, 1;
      return make_map(t, w, h);
    case Kind::crop: {
      const CropRect& r = op.rect;
      if (r.width == 0 || r.height == 0 || r.x + r.width > w || r.y + r.height > h) {
        throw ContractError("crop rectangle " + op.describe() + " is not inside " + std::to_string(w) + "x" +
                            std::to_string(h));
      }
      t << 1, 0, -static_cast<double>(r.x), 0, 1, -static_cast<double>(r.y), 0, 0, 1;
      return make_map(t, r.width, r.height);
    }
    case Kind::random_crop:
      throw ContractError("random_crop must be resolved before it is applied");
  }
  throw ContractError("unknown augmentation");
}

template <typename T>
Raster<T> remap(const Raster<T>& src, const PixelMap& m) {
  Raster<T> out(m.out_w, m.out_h, src.channels());
  for (std::size_t r = 0; r < m.out_h; ++r) {
    for (std::size_t c = 0; c < m.out_w; ++c) {
      std::size_t sr = 0, sc = 0;
      if (!m.source(r, c, src.width(), src.height(), sr, sc)) continue;
      for (std::size_t ch = 0; ch < src.channels(); ++ch) out.at(r, c, ch) = src.at(sr, sc, ch);
    }
  }
  return out;
}

PairedSample transform(const PairedSample& sample, const PixelMap& m) {
  PairedSample out;
  out.id = sample.id;
  out.scene = remap(sample.scene, m);
  out.energy = remap(sample.energy, m);
  out.homography = Homography::from_matrix(m.t * sample.homography.matrix());
  out.annotations.reserve(sample.annotations.size());
  for (const auto& a : sample.annotations) out.annotations.push_back({a.label, remap(a.mask, m), a.energy_kcal});
  return out;
}

}  // namespace

AugmentationOp AugmentationOp::resolve(std::size_t width, std::size_t height, RandomStream& rng) const {
  if (kind != Kind::random_crop) return *this;
  if (!(0 < min_crop_fraction && min_crop_fraction <= max_crop_fraction && max_crop_fraction <= 1)) {
    throw ConfigError("random_crop fractions must satisfy 0 < min <= max <= 1");
  }
  auto side = [&](std::size_t extent) {
    const double f = rng.uniform(min_crop_fraction, max_crop_fraction);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(f * static_cast<double>(extent))), 1, extent);
  };
  CropRect r;
  r.width = side(width);
  r.height = side(height);
  r.x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(width - r.width)));
  r.y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(height - r.height)));
  AugmentationOp op = *this;
  op.kind = Kind::crop;
  op.rect = r;
  return op;
}

std::string AugmentationOp::describe() const {
  switch (kind) {
    case Kind::rotate90: return "rotate90";
    case Kind::rotate180: return "rotate180";
    case Kind::rotate270: return "rotate270";
    case Kind::flip_h: return "flip_h";
    case Kind::flip_v: return "flip_v";
    case Kind::random_crop: return "random_crop";
    case Kind::crop: {
      char buf[96];
      std::snprintf(buf, sizeof buf, "crop(%zu,%zu,%zu,%zu)", rect.x, rect.y, rect.width, rect.height);
      return buf;
    }
  }
  return "?";
}

AugmentationOp AugmentationOp::parse(const std::string& text) {
  if (text == "rotate90") return rotate90();
  if (text == "rotate180") return rotate180();
  if (text == "rotate270") return rotate270();
  if (text == "flip_h") return flip_h();
  if (text == "flip_v") return flip_v();
  if (text == "random_crop") return random_crop();
  CropRect r;
  char tail = 0;
  if (std::sscanf(text.c_str(), "crop(%zu,%zu,%zu,%zu%c", &r.x, &r.y, &r.width, &r.height, &tail) == 5 &&
      tail == ')') {
    return crop(r);
  }
  throw ConfigError("unknown augmentation '" + text + "'");
}

PairedSample augment(const PairedSample& sample, const AugmentationOp& op) {
  const PixelMap m = map_for(op, sample.scene.width(), sample.scene.height());
  PairedSample out = transform(sample, m);
  if (op.kind != Kind::crop) return out;

  std::vector<FoodAnnotation> kept;
  for (auto& a : out.annotations) {
    double total = 0;
    bool any = false;
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
      if (a.mask.data()[i] == 0) continue;
      any = true;
      total += out.energy.data()[i];
    }
    if (!any || !(total > 0)) continue;
    a.energy_kcal = total;
    kept.push_back(std::move(a));
  }
  if (kept.empty()) throw EmptySampleError("crop " + op.describe() + " removes every food of " + sample.id);
  out.annotations = std::move(kept);
  // Energy outside the surviving masks belongs to dropped foods.
  Raster<std::uint8_t> covered(out.energy.width(), out.energy.height(), 1, 0);
  for (const auto& a : out.annotations)
    for (std::size_t i = 0; i < covered.size(); ++i) covered.data()[i] |= a.mask.data()[i];
  for (std::size_t i = 0; i < covered.size(); ++i)
    if (!covered.data()[i]) out.energy.data()[i] = 0;
  return out;
}

PairedSample pad_to(const PairedSample& sample, std::size_t width, std::size_t height) {
  const std::size_t w = sample.scene.width(), h = sample.scene.height();
  if (w > width || h > height) throw ContractError("pad_to target is smaller than the sample");
  const double ox = static_cast<double>((width - w) / 2), oy = static_cast<double>((height - h) / 2);
  Eigen::Matrix3d t;
  t << 1, 0, ox, 0, 1, oy, 0, 0, 1;
  return transform(sample, make_map(t, width, height));
}

std::vector<AugmentationOp> default_augment_plan(std::size_t count) {
  const std::vector<AugmentationOp> cycle = {AugmentationOp::rotate90(), AugmentationOp::rotate180(),
                                             AugmentationOp::rotate270(), AugmentationOp::flip_h(),
                                             AugmentationOp::flip_v()};
  std::vector<AugmentationOp> plan;
  for (std::size_t i = 0; i < count; ++i) {
    plan.push_back(i < cycle.size() ? cycle[i] : AugmentationOp::random_crop());
  }
  return plan;
}

}  // namespace kcal
