#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kcal/energy.hpp"
#include "kcal/png_writer.hpp"
#include "kcal/trainer.hpp"

namespace kcal {

/// Fixed 256-entry heat colormap (black, purple, red, orange, pale yellow),
/// linearly interpolated between five anchors.
const std::array<std::array<std::uint8_t, 3>, 256>& heat_colormap();

/// Maps w / e_max (clamped to [0, 1]) through the colormap.
std::array<std::uint8_t, 3> heat_color(double w, double e_max);

/// Parses a metrics CSV with the standard header. Throws FormatError naming
/// the offending 1-based line.
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text);

struct CurveSeries {
  std::string name;
  std::vector<EpochMetrics> rows;
};

/// Mean absolute error rate against epoch, one colored line per series, with
/// axes and a legend.
RgbImage render_error_curves(const std::vector<CurveSeries>& series);

/// scene | ground truth | prediction, each panel upscaled by `scale`, energy
/// panels on the heat colormap over [0, e_max].
RgbImage render_triptych(const Raster<float>& scene, const Raster<float>& truth, const Raster<float>& prediction,
                         double e_max, int scale = 4);

}  // namespace kcal
