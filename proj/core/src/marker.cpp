#include "kcal/marker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kcal/error.hpp"

namespace kcal {

Rgb MarkerSpec::square_color(int row, int col) const {
  if (is_dark(row, col)) return dark;
  const int light_index = (row * cols + col) / 2;
  return light_palette[static_cast<std::size_t>(light_index) % light_palette.size()];
}

std::optional<Rgb> MarkerSpec::color_at(const Eigen::Vector2d& p) const {
  const double u = (p.x() - origin.x()) / square_size;
  const double v = (p.y() - origin.y()) / square_size;
  if (u < 0 || v < 0 || u >= cols || v >= rows) return std::nullopt;
  return square_color(static_cast<int>(v), static_cast<int>(u));
}

std::vector<Eigen::Vector2d> MarkerSpec::inner_corners() const {
  std::vector<Eigen::Vector2d> out;
  for (int r = 1; r < rows; ++r)
    for (int c = 1; c < cols; ++c) out.push_back(origin + square_size * Eigen::Vector2d(c, r));
  return out;
}

Eigen::Vector2d MarkerSpec::square_center(int row, int col) const {
  return origin + square_size * Eigen::Vector2d(col + 0.5, row + 0.5);
}

std::array<Eigen::Vector2d, 4> MarkerSpec::outline() const {
  const double w = cols * square_size, h = rows * square_size;
  return {origin, origin + Eigen::Vector2d(w, 0), origin + Eigen::Vector2d(w, h), origin + Eigen::Vector2d(0, h)};
}

MarkerSpec default_marker_spec(std::size_t width, std::size_t height) {
  MarkerSpec spec;
  const double extent = static_cast<double>(std::min(width, height));
  spec.square_size = std::max(4.0, std::round(extent / 12.0));
  const double margin = std::max(3.0, std::round(extent / 16.0));
  spec.origin = Eigen::Vector2d(margin, static_cast<double>(height) - margin - spec.rows * spec.square_size);
  return spec;
}

namespace {

constexpr float kDarkThreshold = 0.2f;

struct Component {
  double area = 0;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
};

Raster<float> max_channel(const Raster<float>& rgb) {
  Raster<float> out(rgb.width(), rgb.height());
  for (std::size_t r = 0; r < rgb.height(); ++r)
    for (std::size_t c = 0; c < rgb.width(); ++c) {
      float m = rgb.at(r, c, 0);
      for (std::size_t ch = 1; ch < rgb.channels(); ++ch) m = std::max(m, rgb.at(r, c, ch));
      out.at(r, c) = m;
    }
  return out;
}

std::vector<Component> dark_components(const Raster<float>& intensity) {
  const std::size_t w = intensity.width(), h = intensity.height();
  std::vector<int> label(w * h, -1);
  std::vector<Component> comps;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (label[start] >= 0 || intensity.data()[start] >= kDarkThreshold) continue;
    Component comp;
    const int id = static_cast<int>(comps.size());
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const std::size_t r = idx / w, c = idx % w;
      comp.area += 1;
      comp.centroid += Eigen::Vector2d(static_cast<double>(c), static_cast<double>(r));
      auto visit = [&](std::size_t rr, std::size_t cc) {
        const std::size_t j = rr * w + cc;
        if (label[j] < 0 && intensity.data()[j] < kDarkThreshold) {
          label[j] = id;
          stack.push_back(j);
        }
      };
      if (r > 0) visit(r - 1, c);
      if (r + 1 < h) visit(r + 1, c);
      if (c > 0) visit(r, c - 1);
      if (c + 1 < w) visit(r, c + 1);
    }
    comp.centroid /= comp.area;
    comps.push_back(comp);
  }
  return comps;
}

// Picks `count` components with the most uniform areas.
std::vector<Component> select_squares(std::vector<Component> comps, std::size_t count) {
  comps.erase(std::remove_if(comps.begin(), comps.end(), [](const Component& c) { return c.area < 3; }),
              comps.end());
  if (comps.size() < count) return {};
  std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) { return a.area < b.area; });
  std::size_t best = 0;
  double best_ratio = 1e300;
  for (std::size_t i = 0; i + count <= comps.size(); ++i) {
    const double ratio = comps[i + count - 1].area / comps[i].area;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = i;
    }
  }
  if (best_ratio > 4.0) return {};
  return {comps.begin() + static_cast<long>(best), comps.begin() + static_cast<long>(best + count)};
}

Raster<float> gaussian_blur(const Raster<float>& src, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= norm;
  const long w = static_cast<long>(src.width()), h = static_cast<long>(src.height());
  auto clamp = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
  Raster<float> tmp(src.width(), src.height()), out(src.width(), src.height());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * src.at(static_cast<std::size_t>(r), static_cast<std::size_t>(clamp(c + i, w)));
      tmp.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<float>(acc);
    }
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(static_cast<std::size_t>(clamp(r + i, h)), static_cast<std::size_t>(c));
      out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<float>(acc);
    }
  return out;
}

// Saddle response Ixy^2 - Ixx * Iyy (positive at X-junctions).
double saddle_response(const Raster<float>& img, long r, long c) {
  auto at = [&](long rr, long cc) {
    return static_cast<double>(img.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)));
  };
  const double ixx = at(r, c + 1) - 2 * at(r, c) + at(r, c - 1);
  const double iyy = at(r + 1, c) - 2 * at(r, c) + at(r - 1, c);
  const double ixy = 0.25 * (at(r + 1, c + 1) - at(r + 1, c - 1) - at(r - 1, c + 1) + at(r - 1, c - 1));
  return ixy * ixy - ixx * iyy;
}

std::optional<Eigen::Vector2d> refine_corner(const Raster<float>& blurred, const Eigen::Vector2d& guess,
                                             int radius) {
  const long w = static_cast<long>(blurred.width()), h = static_cast<long>(blurred.height());
  const long gc = std::lround(guess.x()), gr = std::lround(guess.y());
  double best = -1e300;
  long br = -1, bc = -1;
  for (long r = gr - radius; r <= gr + radius; ++r)
    for (long c = gc - radius; c <= gc + radius; ++c) {
      if (r < 2 || c < 2 || r >= h - 2 || c >= w - 2) continue;
      const double v = saddle_response(blurred, r, c);
      if (v > best) {
        best = v;
        br = r;
        bc = c;
      }
    }
  if (br < 0 || best <= 0) return std::nullopt;

  // Least-squares quadratic f = a + b x + c y + d x^2 + e x y + f y^2 on 3x3.
  Eigen::Matrix<double, 9, 6> a;
  Eigen::Matrix<double, 9, 1> z;
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx, ++k) {
      a.row(k) << 1, dx, dy, dx * dx, dx * dy, dy * dy;
      z(k) = saddle_response(blurred, br + dy, bc + dx);
    }
  const Eigen::Matrix<double, 6, 1> q = a.colPivHouseholderQr().solve(z);
  Eigen::Matrix2d hess;
  hess << 2 * q(3), q(4), q(4), 2 * q(5);
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  if (hess.determinant() > 0 && hess(0, 0) < 0) {
    offset = hess.ldlt().solve(-Eigen::Vector2d(q(1), q(2)));
    offset = offset.cwiseMax(-1.0).cwiseMin(1.0);
  }
  return Eigen::Vector2d(static_cast<double>(bc), static_cast<double>(br)) + offset;
}

double color_distance(const Raster<float>& rgb, const Eigen::Vector2d& p, const Rgb& expected) {
  const long c = std::lround(p.x()), r = std::lround(p.y());
  if (r < 0 || c < 0 || r >= static_cast<long>(rgb.height()) || c >= static_cast<long>(rgb.width())) return 1e9;
  double d = 0;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double diff = rgb.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) - expected[ch];
    d += diff * diff;
  }
  return std::sqrt(d);
}

double color_score(const Raster<float>& rgb, const MarkerSpec& spec, const Homography& h) {
  int good = 0;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const Eigen::Vector2d p = h.apply(spec.square_center(r, c));
      if (color_distance(rgb, p, spec.square_color(r, c)) < 0.3) ++good;
    }
  return static_cast<double>(good) / (spec.rows * spec.cols);
}

}  // namespace

MarkerDetection detect_marker(const Raster<float>& rgb, const MarkerSpec& spec) {
  if (rgb.channels() < 3) throw DetectionError("detect_marker: expected an RGB raster", 0.0);
  const Raster<float> intensity = max_channel(rgb);
  const std::size_t dark_count = static_cast<std::size_t>((spec.rows * spec.cols + 1) / 2);
  const auto squares = select_squares(dark_components(intensity), dark_count);
  if (squares.empty()) throw DetectionError("no checkerboard marker found", 0.0);

  // Principal axes: the major axis runs along the board's longer side.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& s : squares) mean += s.centroid;
  mean /= static_cast<double>(squares.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& s : squares) cov += (s.centroid - mean) * (s.centroid - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> pca(cov);
  Eigen::Vector2d major = pca.eigenvectors().col(1);
  const bool cols_major = spec.cols >= spec.rows;

  double best_conf = 0.0;
  std::optional<MarkerDetection> best;
  for (double sign : {1.0, -1.0}) {
    const Eigen::Vector2d u = sign * major;
    const Eigen::Vector2d v(-u.y(), u.x());
    const Eigen::Vector2d col_axis = cols_major ? u : v;
    const Eigen::Vector2d row_axis = cols_major ? v : -u;
    std::vector<double> a, b;
    for (const auto& s : squares) {
      a.push_back((s.centroid - mean).dot(col_axis));
      b.push_back((s.centroid - mean).dot(row_axis));
    }
    // Rank assignment: rows by the row-axis coordinate, then columns within a row.
    std::vector<std::size_t> order(squares.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return b[i] < b[j]; });
    CorrespondenceSet corr;
    auto next = order.begin();
    for (int row = 0; row < spec.rows; ++row) {
      std::vector<int> dark_cols;
      for (int col = 0; col < spec.cols; ++col)
        if (spec.is_dark(row, col)) dark_cols.push_back(col);
      const auto end = next + static_cast<long>(dark_cols.size());
      std::sort(next, end, [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
      for (std::size_t k = 0; k < dark_cols.size(); ++k, ++next)
        corr.push_back({squares[*next].centroid, spec.square_center(row, dark_cols[k])});
    }
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const double step_a = (*amax - *amin) / (spec.cols - 1);
    const double step_b = (*bmax - *bmin) / (spec.rows - 1);
    if (step_a <= 0 || step_b <= 0) continue;

    Homography h;
    try {
      h = estimate_homography_dlt(corr);
    } catch (const Error&) {
      continue;
    }
    const double conf = color_score(rgb, spec, h);
    best_conf = std::max(best_conf, conf);
    if (conf < 0.5 || (best && best->confidence >= conf)) continue;

    const double sigma = std::clamp(0.2 * (step_a + step_b) * 0.5, 0.7, 2.0);
    const Raster<float> blurred = gaussian_blur(intensity, sigma);
    MarkerDetection det;
    det.confidence = conf;
    bool refined = true;
    for (const auto& corner : spec.inner_corners()) {
      const Eigen::Vector2d guess = h.apply(corner);
      const double local = (h.apply(corner + Eigen::Vector2d(spec.square_size, 0)) - guess).norm();
      const int radius = std::max(1, static_cast<int>(std::lround(0.35 * local)));
      auto p = refine_corner(blurred, guess, radius);
      if (!p) {
        refined = false;
        break;
      }
      det.corner_points.push_back(*p);
    }
    if (refined) best = std::move(det);
  }
  if (!best) throw DetectionError("checkerboard marker could not be verified", best_conf);
  return *best;
}

}  // namespace kcal
