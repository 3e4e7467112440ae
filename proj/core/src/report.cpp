#include "kcal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kcal/error.hpp"

namespace kcal {

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kBlack{0, 0, 0}, kGrid{225, 225, 225}, kAxis{60, 60, 60};
constexpr Color kSeriesColors[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                                   {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {23, 190, 207}};

std::array<Color, 256> build_colormap() {
  constexpr double stops[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  constexpr int anchors[5][3] = {{0, 0, 4}, {87, 16, 110}, {188, 55, 84}, {249, 142, 9}, {252, 255, 164}};
  std::array<Color, 256> lut{};
  for (int i = 0; i < 256; ++i) {
    const double t = i / 255.0;
    int k = 0;
    while (k < 3 && t > stops[k + 1]) ++k;
    const double f = (t - stops[k]) / (stops[k + 1] - stops[k]);
    for (int c = 0; c < 3; ++c) {
      const double v = anchors[k][c] + f * (anchors[k + 1][c] - anchors[k][c]);
      lut[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return lut;
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10 * mag;
}

}  // namespace

const std::array<std::array<std::uint8_t, 3>, 256>& heat_colormap() {
  static const auto lut = build_colormap();
  return lut;
}

std::array<std::uint8_t, 3> heat_color(double w, double e_max) {
  const double t = e_max > 0 ? std::clamp(w / e_max, 0.0, 1.0) : 0.0;
  return heat_colormap()[static_cast<std::size_t>(std::lround(t * 255.0))];
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<EpochMetrics> rows;
  const std::string header = "epoch,d_loss,g_loss,g_conditional,mean_signed_error,mean_abs_error,wall_seconds";
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != header) throw FormatError("line 1: unexpected metrics header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    EpochMetrics m;
    char tail = 0;
    const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf%c", &m.epoch, &m.d_loss, &m.g_loss,
                                &m.g_conditional, &m.mean_signed_error, &m.mean_abs_error, &m.wall_seconds, &tail);
    if (got != 7) throw FormatError("line " + std::to_string(lineno) + ": malformed metrics row '" + line + "'");
    rows.push_back(m);
  }
  if (lineno == 0) throw FormatError("line 1: empty metrics file");
  return rows;
}

RgbImage render_error_curves(const std::vector<CurveSeries>& series) {
  constexpr long W = 720, H = 440, left = 70, right = 20, top = 40, bottom = 50;
  RgbImage img(W, H);
  const long pw = W - left - right, ph = H - top - bottom;

  int max_epoch = 1;
  double max_err = 0;
  for (const auto& s : series)
    for (const auto& r : s.rows) {
      max_epoch = std::max(max_epoch, r.epoch);
      if (std::isfinite(r.mean_abs_error)) max_err = std::max(max_err, r.mean_abs_error);
    }
  if (!(max_err > 0)) max_err = 1;
  const double ystep = nice_step(max_err, 5);
  const double ymax = std::ceil(max_err / ystep) * ystep;
  const double xstep = std::max(1.0, nice_step(max_epoch, 8));

  auto px = [&](double epoch) { return left + std::lround(epoch / max_epoch * static_cast<double>(pw)); };
  auto py = [&](double err) { return top + ph - std::lround(std::clamp(err / ymax, 0.0, 1.0) * static_cast<double>(ph)); };

  for (double v = 0; v <= ymax + 1e-12; v += ystep) {
    img.line(left, py(v), left + pw, py(v), kGrid);
    const std::string label = format_tick(v);
    img.text(left - 8 - RgbImage::text_width(label), py(v) - 3, label, kAxis);
  }
  for (double e = 0; e <= max_epoch + 1e-9; e += xstep) {
    img.line(px(e), top, px(e), top + ph, kGrid);
    const std::string label = format_tick(e);
    img.text(px(e) - RgbImage::text_width(label) / 2, top + ph + 8, label, kAxis);
  }
  img.line(left, top, left, top + ph, kAxis, 2);
  img.line(left, top + ph, left + pw, top + ph, kAxis, 2);
  img.text(left, 14, "MEAN ABS ERROR RATE VS EPOCH", kBlack, 2);
  img.text(left + pw / 2 - RgbImage::text_width("EPOCH") / 2, H - 18, "EPOCH", kAxis);

  for (std::size_t i = 0; i < series.size(); ++i) {
    const Color c = kSeriesColors[i % (sizeof kSeriesColors / sizeof kSeriesColors[0])];
    const auto& rows = series[i].rows;
    for (std::size_t k = 1; k < rows.size(); ++k) {
      img.line(px(rows[k - 1].epoch), py(rows[k - 1].mean_abs_error), px(rows[k].epoch), py(rows[k].mean_abs_error),
               c, 2);
    }
    if (rows.size() == 1) img.fill_rect(px(rows[0].epoch) - 2, py(rows[0].mean_abs_error) - 2, 5, 5, c);
    const long ly = top + 10 + static_cast<long>(i) * 14;
    const long lx = left + pw - 10 - RgbImage::text_width(series[i].name) - 18;
    img.fill_rect(lx, ly, 12, 7, c);
    img.text(lx + 18, ly, series[i].name, kBlack);
  }
  return img;
}

RgbImage render_triptych(const Raster<float>& scene, const Raster<float>& truth, const Raster<float>& prediction,
                         double e_max, int scale) {
  if (!scene.same_extent(truth) || !scene.same_extent(prediction) || scene.channels() != 3) {
    throw DimensionError("triptych panels must share one extent");
  }
  const long w = static_cast<long>(scene.width()) * scale, h = static_cast<long>(scene.height()) * scale;
  constexpr long gap = 8, caption = 16;
  RgbImage img(static_cast<std::size_t>(3 * w + 4 * gap), static_cast<std::size_t>(h + 2 * gap + caption));
  const char* titles[3] = {"SCENE", "TRUTH", "PREDICTED"};
  for (int panel = 0; panel < 3; ++panel) {
    const long ox = gap + panel * (w + gap), oy = gap + caption;
    img.text(ox, gap, titles[panel], kBlack);
    for (std::size_t r = 0; r < scene.height(); ++r) {
      for (std::size_t c = 0; c < scene.width(); ++c) {
        Color col;
        if (panel == 0) {
          for (std::size_t ch = 0; ch < 3; ++ch)
            col[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(scene.at(r, c, ch), 0.0f, 1.0f) * 255.0f));
        } else {
          col = heat_color((panel == 1 ? truth : prediction).at(r, c), e_max);
        }
        img.fill_rect(ox + static_cast<long>(c) * scale, oy + static_cast<long>(r) * scale, scale, scale, col);
      }
    }
  }
  return img;
}

}  // namespace kcal
