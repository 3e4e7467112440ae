#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kcal/tensor.hpp"

namespace kcal {

struct GradCheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-6;           // central-difference half width
  double input_scale = 1.0;     // inputs ~ U(-scale, scale)
  double min_abs_input = 0.0;   // resample values closer to zero than this (kinks)
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double relative_floor = 1e-3;
};

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per input
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

using GradCheckFn = std::function<TensorD(const std::vector<TensorD>&)>;

/// Compares reverse-mode gradients of `fn` with 64-bit central differences.
///
/// The scalar objective is sum(fn(inputs) * R) for a fixed random R, so every
/// output element contributes with a distinct weight. `fn` must be a
/// deterministic function of its inputs.
GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Shape>& input_shapes,
                           double tolerance, const GradCheckOptions& options = {});

}  // namespace kcal
