#include "kcal/adam.hpp"

#include <cmath>

namespace kcal {

void adam_step(Parameter& p, const AdamConfig& cfg) {
  auto value = p.value.data();
  const auto grad = p.value.grad();
  if (p.adam_m.size() != value.size()) p.adam_m.assign(value.size(), 0.0f);
  if (p.adam_v.size() != value.size()) p.adam_v.assign(value.size(), 0.0f);
  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
    p.adam_m[i] = static_cast<float>(m);
    p.adam_v[i] = static_cast<float>(v);
    const double step = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    value[i] = static_cast<float>(value[i] - step);
  }
}

void adam_step(const std::vector<NamedParameter>& params, const AdamConfig& cfg) {
  for (const auto& p : params) adam_step(*p.param, cfg);
}

void zero_grads(const std::vector<NamedParameter>& params) {
  for (const auto& p : params) p.param->value.zero_grad();
}

}  // namespace kcal
