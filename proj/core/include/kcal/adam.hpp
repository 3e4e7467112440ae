#pragma once

#include <vector>

#include "kcal/layers.hpp"

namespace kcal {

struct AdamConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter from its current gradient.
/// Increments step_count; gradients are left in place.
void adam_step(const std::vector<NamedParameter>& params, const AdamConfig& cfg);
void adam_step(Parameter& param, const AdamConfig& cfg);

void zero_grads(const std::vector<NamedParameter>& params);

}  // namespace kcal
