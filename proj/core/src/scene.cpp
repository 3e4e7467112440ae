#include "kcal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "kcal/error.hpp"
#include "kcal/rng.hpp"

namespace kcal {

const char* to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::stack: return "stack";
  }
  return "ellipse";
}

ShapeFamily shape_family_from_string(const std::string& name) {
  if (name == "ellipse") return ShapeFamily::ellipse;
  if (name == "blob") return ShapeFamily::blob;
  if (name == "stack") return ShapeFamily::stack;
  throw ConfigError("unknown shape family '" + name + "'");
}

std::vector<FoodClass> default_food_classes() {
  return {
      {"steak", 2.6, {0.52f, 0.26f, 0.16f}, ShapeFamily::ellipse, 0.35},
      {"broccoli", 0.35, {0.22f, 0.55f, 0.20f}, ShapeFamily::blob, 0.5},
      {"fries", 3.1, {0.93f, 0.76f, 0.30f}, ShapeFamily::stack, 0.3},
      {"rice", 1.3, {0.96f, 0.93f, 0.80f}, ShapeFamily::blob, 0.15},
      {"tomato", 0.2, {0.85f, 0.22f, 0.16f}, ShapeFamily::ellipse, 0.2},
      {"bread", 2.6, {0.78f, 0.58f, 0.33f}, ShapeFamily::stack, 0.25},
  };
}

SceneSpec SceneSpec::with_extent(std::size_t width, std::size_t height) {
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.marker = default_marker_spec(width, height);
  return spec;
}

void SceneSpec::validate() const {
  if (width < 32 || height < 32) throw ConfigError("scene extent must be at least 32x32");
  if (min_foods < 1 || max_foods < min_foods) throw ConfigError("food count range must satisfy 1 <= min <= max");
  if (classes.empty()) throw ConfigError("scene spec has no food classes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!(classes[i].energy_density > 0)) throw ConfigError("food class '" + classes[i].name + "' needs positive density");
    for (std::size_t j = 0; j < i; ++j)
      if (classes[i].name == classes[j].name) throw ConfigError("duplicate food class '" + classes[i].name + "'");
  }
  if (!(min_food_radius > 0 && max_food_radius >= min_food_radius)) throw ConfigError("invalid food radius range");
  if (perspective_jitter < 0) throw ConfigError("perspective jitter must be nonnegative");
}

namespace {

constexpr double kAspectLo = 0.65;
constexpr double kBlobScale = 0.88;
constexpr double kBlobHarmonic = 0.12;
constexpr double kStackScale = 0.75;
constexpr double kStackCorner = 0.35;

struct FoodShape {
  ShapeFamily family = ShapeFamily::ellipse;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double angle = 0;
  double a = 1, b = 1;          // ellipse semi-axes / stack half sizes / blob base radius in a
  double corner = 0;            // stack
  double h2 = 0, h3 = 0, p2 = 0, p3 = 0;  // blob harmonics
  double bound = 1;

  Eigen::Vector2d local(const Eigen::Vector2d& p) const {
    const Eigen::Vector2d d = p - center;
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  }

  bool contains(const Eigen::Vector2d& p) const {
    const Eigen::Vector2d q = local(p);
    switch (family) {
      case ShapeFamily::ellipse:
        return (q.x() / a) * (q.x() / a) + (q.y() / b) * (q.y() / b) <= 1.0;
      case ShapeFamily::blob: {
        const double t = std::atan2(q.y(), q.x());
        const double rho = a * (1 + h2 * std::cos(2 * t + p2) + h3 * std::cos(3 * t + p3));
        return q.norm() <= rho;
      }
      case ShapeFamily::stack: {
        const double ax = std::abs(q.x()), ay = std::abs(q.y());
        if (ax > a || ay > b) return false;
        const double dx = ax - (a - corner), dy = ay - (b - corner);
        return !(dx > 0 && dy > 0 && dx * dx + dy * dy > corner * corner);
      }
    }
    return false;
  }

  double area() const {
    switch (family) {
      case ShapeFamily::ellipse: return std::numbers::pi * a * b;
      case ShapeFamily::blob: return std::numbers::pi * a * a * (1 + 0.5 * (h2 * h2 + h3 * h3));
      case ShapeFamily::stack: return 4 * a * b - (4 - std::numbers::pi) * corner * corner;
    }
    return 0;
  }
};

FoodShape draw_shape(ShapeFamily family, double radius, RandomStream& rng) {
  FoodShape s;
  s.family = family;
  s.angle = rng.uniform(0, std::numbers::pi);
  const double aspect = rng.uniform(kAspectLo, 1.0);
  switch (family) {
    case ShapeFamily::ellipse:
      s.a = radius;
      s.b = radius * aspect;
      s.bound = radius;
      break;
    case ShapeFamily::blob:
      s.a = kBlobScale * radius;
      s.h2 = rng.uniform(0, kBlobHarmonic);
      s.h3 = rng.uniform(0, kBlobHarmonic);
      s.p2 = rng.uniform(0, 2 * std::numbers::pi);
      s.p3 = rng.uniform(0, 2 * std::numbers::pi);
      s.bound = s.a * (1 + s.h2 + s.h3);
      break;
    case ShapeFamily::stack:
      s.a = kStackScale * radius;
      s.b = kStackScale * radius * aspect;
      s.corner = kStackCorner * std::min(s.a, s.b);
      s.bound = std::hypot(s.a, s.b);
      break;
  }
  return s;
}

// Smooth lattice noise in [-1, 1].
double value_noise(double x, double y, std::uint64_t salt) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double tx = x - fx, ty = y - fy;
  auto lattice = [&](double ix, double iy) {
    const auto h = mix64(salt ^ mix64(static_cast<std::uint64_t>(static_cast<std::int64_t>(ix)) * 0x9E3779B97F4A7C15ULL +
                                      static_cast<std::uint64_t>(static_cast<std::int64_t>(iy))));
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  };
  const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
  const double top = lattice(fx, fy) * (1 - sx) + lattice(fx + 1, fy) * sx;
  const double bottom = lattice(fx, fy + 1) * (1 - sx) + lattice(fx + 1, fy + 1) * sx;
  return top * (1 - sy) + bottom * sy;
}

struct Layout {
  Eigen::Vector2d plate_center;
  double plate_radius;
  std::vector<FoodShape> shapes;
  std::vector<std::size_t> classes;
};

struct Renderer {
  const SceneSpec& spec;
  const Layout& layout;
  std::uint64_t salt;

  Rgb table(const Eigen::Vector2d& p) const {
    const double grain = 0.06 * std::sin(0.7 * p.y() + 0.25 * std::sin(0.09 * p.x())) +
                         0.04 * value_noise(0.3 * p.x(), 0.05 * p.y(), salt ^ 0x7AB1EULL);
    return {static_cast<float>(0.60 * (1 + grain)), static_cast<float>(0.45 * (1 + grain)),
            static_cast<float>(0.31 * (1 + grain))};
  }

  Rgb color(const Eigen::Vector2d& p) const {
    if (auto m = spec.marker.color_at(p)) return *m;
    for (std::size_t k = layout.shapes.size(); k-- > 0;) {
      const FoodShape& s = layout.shapes[k];
      if (!s.contains(p)) continue;
      const FoodClass& fc = spec.classes[layout.classes[k]];
      const double n = value_noise(0.6 * p.x(), 0.6 * p.y(), salt + 131 * (k + 1));
      double f = 1.0 + 0.35 * fc.texture_amplitude * n;
      if (fc.shape_family == ShapeFamily::stack) {
        const double t = std::min(1.0, (p - s.center).norm() / s.bound);
        f *= 0.82 + 0.22 * (1 - t);
      }
      return {static_cast<float>(std::clamp(fc.base_color[0] * f, 0.0, 1.0)),
              static_cast<float>(std::clamp(fc.base_color[1] * f, 0.0, 1.0)),
              static_cast<float>(std::clamp(fc.base_color[2] * f, 0.0, 1.0))};
    }
    const double d = (p - layout.plate_center).norm();
    if (d <= layout.plate_radius) {
      const float rim = d > 0.88 * layout.plate_radius ? 0.9f : 1.0f;
      return {0.72f * rim, 0.82f * rim, 0.92f * rim};
    }
    return table(p);
  }

  std::optional<std::size_t> food_at(const Eigen::Vector2d& p) const {
    for (std::size_t k = layout.shapes.size(); k-- > 0;) {
      if (layout.shapes[k].contains(p)) return k;
    }
    return std::nullopt;
  }
};

bool inside(const Eigen::Vector2d& p, const SceneSpec& spec, double margin) {
  return p.x() >= margin && p.y() >= margin && p.x() <= static_cast<double>(spec.width) - 1 - margin &&
         p.y() <= static_cast<double>(spec.height) - 1 - margin;
}

Homography draw_homography(const SceneSpec& spec, const Layout& layout, RandomStream& rng) {
  const double extent = static_cast<double>(std::min(spec.width, spec.height));
  const Eigen::Vector2d center(0.5 * (spec.width - 1.0), 0.5 * (spec.height - 1.0));
  std::vector<Eigen::Vector2d> must_see;
  for (const auto& c : spec.marker.outline()) must_see.push_back(c);
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      must_see.push_back(layout.plate_center + layout.plate_radius * Eigen::Vector2d(sx, sy));

  for (int attempt = 0; attempt < 32; ++attempt) {
    const double theta = rng.uniform(-8.0, 8.0) * std::numbers::pi / 180.0;
    const double scale = rng.uniform(0.92, 1.04);
    const double tx = rng.uniform(-2.0, 2.0), ty = rng.uniform(-2.0, 2.0);
    const double px = rng.uniform(-spec.perspective_jitter, spec.perspective_jitter) / extent;
    const double py = rng.uniform(-spec.perspective_jitter, spec.perspective_jitter) / extent;
    Eigen::Matrix3d sim;
    sim << scale * std::cos(theta), -scale * std::sin(theta), tx, scale * std::sin(theta), scale * std::cos(theta), ty,
        0, 0, 1;
    Eigen::Matrix3d persp = Eigen::Matrix3d::Identity();
    persp(2, 0) = px;
    persp(2, 1) = py;
    const Homography c = Homography::translation(center.x(), center.y());
    Homography h;
    try {
      h = c * Homography::from_matrix(persp * sim) * c.inverse();
    } catch (const Error&) {
      continue;
    }
    const bool visible = std::all_of(must_see.begin(), must_see.end(),
                                     [&](const Eigen::Vector2d& p) { return inside(h.apply(p), spec, 1.0); });
    if (visible) return h;
  }
  return Homography();
}

Layout draw_layout(const SceneSpec& spec, RandomStream& rng, int food_count) {
  const double extent = static_cast<double>(std::min(spec.width, spec.height));
  Layout layout;
  layout.plate_center = Eigen::Vector2d(0.62 * spec.width, 0.36 * spec.height);
  layout.plate_radius = 0.30 * extent;
  for (int k = 0; k < food_count; ++k) {
    const auto cls = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.classes.size()) - 1));
    const double radius = rng.uniform(spec.min_food_radius, spec.max_food_radius) * extent;
    FoodShape shape = draw_shape(spec.classes[cls].shape_family, radius, rng);
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      const double room = layout.plate_radius - shape.bound - 1.0;
      if (room <= 0) break;
      const double r = room * std::sqrt(rng.uniform());
      const double t = rng.uniform(0, 2 * std::numbers::pi);
      shape.center = layout.plate_center + r * Eigen::Vector2d(std::cos(t), std::sin(t));
      placed = true;
      if (spec.allow_occlusion) break;
      for (const auto& other : layout.shapes) {
        if ((other.center - shape.center).norm() < other.bound + shape.bound + 1.5) {
          placed = false;
          break;
        }
      }
    }
    if (placed) {
      layout.shapes.push_back(shape);
      layout.classes.push_back(cls);
    }
  }
  return layout;
}

}  // namespace

double expected_food_area(const SceneSpec& spec, ShapeFamily family) {
  const double extent = static_cast<double>(std::min(spec.width, spec.height));
  const double lo = spec.min_food_radius * extent, hi = spec.max_food_radius * extent;
  const double er2 = (lo * lo + lo * hi + hi * hi) / 3.0;
  const double e_aspect = 0.5 * (kAspectLo + 1.0);
  const double e_aspect2 = (1.0 - kAspectLo * kAspectLo * kAspectLo) / (3.0 * (1.0 - kAspectLo));
  switch (family) {
    case ShapeFamily::ellipse: return std::numbers::pi * er2 * e_aspect;
    case ShapeFamily::blob: {
      const double e_h2 = kBlobHarmonic * kBlobHarmonic / 3.0;
      return std::numbers::pi * kBlobScale * kBlobScale * er2 * (1.0 + e_h2);
    }
    case ShapeFamily::stack: {
      const double s2 = kStackScale * kStackScale;
      return 4.0 * s2 * er2 * e_aspect - (4.0 - std::numbers::pi) * kStackCorner * kStackCorner * s2 * er2 * e_aspect2;
    }
  }
  return 0;
}

PairedSample sample_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  RandomStream root(spec.seed, {0x5CE7EULL, index});
  int food_count = static_cast<int>(root.uniform_int(spec.min_foods, spec.max_foods));

  for (int attempt = 0;; ++attempt) {
    RandomStream rng = root.derive(static_cast<std::uint64_t>(attempt));
    Layout layout = draw_layout(spec, rng, food_count);
    if (layout.shapes.empty()) {
      // Placement failed even for one food; shrink the request and retry.
      food_count = std::max(1, food_count - 1);
      if (attempt > 64) throw ConfigError("scene spec leaves no room for any food");
      continue;
    }
    const Homography h = draw_homography(spec, layout, rng);
    const Homography rectify = h.inverse();
    const Renderer renderer{spec, layout, rng.derive(0x7E47ULL).key()};

    PairedSample sample;
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(index));
    sample.id = id;
    sample.homography = h;
    sample.scene = Raster<float>(spec.width, spec.height, 3);
    std::vector<Mask> masks(layout.shapes.size(), Mask(spec.width, spec.height, 1, 0));
    constexpr double offsets[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        double acc[3] = {0, 0, 0};
        for (double dy : offsets)
          for (double dx : offsets) {
            const Rgb col = renderer.color(rectify.apply({c + dx, r + dy}));
            for (int ch = 0; ch < 3; ++ch) acc[ch] += col[static_cast<std::size_t>(ch)];
          }
        for (std::size_t ch = 0; ch < 3; ++ch) sample.scene.at(r, c, ch) = static_cast<float>(acc[ch] / 9.0);
        if (auto k = renderer.food_at(rectify.apply({static_cast<double>(c), static_cast<double>(r)}))) {
          masks[*k].at(r, c) = 1;
        }
      }
    }

    bool ok = true;
    for (std::size_t k = 0; k < layout.shapes.size(); ++k) {
      const FoodClass& fc = spec.classes[layout.classes[k]];
      const double jitter = rng.uniform(0.8, 1.2);
      const double area = layout.shapes[k].area();
      FoodAnnotation ann{fc.name, std::move(masks[k]), fc.energy_density * area * jitter};
      if (std::none_of(ann.mask.data().begin(), ann.mask.data().end(), [](std::uint8_t v) { return v != 0; })) {
        ok = false;
        break;
      }
      sample.annotations.push_back(std::move(ann));
      sample.foods.push_back({fc.name, layout.shapes[k].center, area, jitter});
    }
    if (!ok) continue;
    try {
      sample.energy = build_energy_image(spec.width, spec.height, sample.annotations, h);
    } catch (const CalibrationError&) {
      if (attempt > 64) throw;
      continue;
    }
    return sample;
  }
}

}  // namespace kcal
