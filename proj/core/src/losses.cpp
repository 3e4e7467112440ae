#include "kcal/losses.hpp"

#include <algorithm>

#include "kcal/error.hpp"

namespace kcal {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::l1: return "l1";
    case LossKind::l2: return "l2";
    case LossKind::smooth_l1_jump: return "smoothl1-jump";
    case LossKind::smooth_l1_standard: return "smoothl1-std";
  }
  return "l1";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "l1") return LossKind::l1;
  if (name == "l2") return LossKind::l2;
  if (name == "smoothl1-jump") return LossKind::smooth_l1_jump;
  if (name == "smoothl1-std") return LossKind::smooth_l1_standard;
  throw ConfigError("unknown loss kind '" + name + "'");
}

template <typename T>
BasicTensor<T> conditional_distance(const BasicTensor<T>& y, const BasicTensor<T>& g, LossKind kind) {
  if (y.shape() != g.shape()) {
    throw DimensionError("conditional distance between " + to_string(y.shape()) + " and " + to_string(g.shape()));
  }
  const auto d = ops::sub(y, g);
  switch (kind) {
    case LossKind::l1: return ops::mean(ops::abs(d));
    case LossKind::l2: return ops::mean(ops::square(d));
    case LossKind::smooth_l1_jump: return ops::mean(ops::smooth_l1(d, 0.0));
    case LossKind::smooth_l1_standard: return ops::mean(ops::smooth_l1(d, 0.5));
  }
  throw ConfigError("unknown loss kind");
}

template <typename T>
BasicTensor<T> discriminator_loss_from_scores(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores) {
  const auto real_term = ops::mean(ops::log_clamped(real_scores, kLogEps));
  const auto fake_term = ops::mean(ops::log_clamped(ops::add_scalar(ops::scale(fake_scores, -1.0), 1.0), kLogEps));
  return ops::scale(ops::add(real_term, fake_term), -1.0);
}

template <typename T>
BasicTensor<T> generator_adversarial_from_scores(const BasicTensor<T>& fake_scores, bool saturating) {
  if (saturating) {
    return ops::mean(ops::log_clamped(ops::add_scalar(ops::scale(fake_scores, -1.0), 1.0), kLogEps));
  }
  return ops::scale(ops::mean(ops::log_clamped(fake_scores, kLogEps)), -1.0);
}

Tensor discriminator_loss(Discriminator& d, const Tensor& x, const Tensor& y_real, const Tensor& y_fake,
                          ops::NormMode mode) {
  const Tensor real = d.forward(x, y_real, mode);
  const Tensor fake = d.forward(x, y_fake.detach(), mode);
  return discriminator_loss_from_scores(real, fake);
}

GeneratorLoss generator_loss(Discriminator& d, const Tensor& g_out, const Tensor& x, const Tensor& y_real,
                             LossKind kind, double lambda, bool saturating, ops::NormMode mode) {
  if (lambda < 0) throw ConfigError("lambda must be nonnegative");
  GeneratorLoss out;
  out.adversarial = generator_adversarial_from_scores(d.forward(x, g_out, mode), saturating);
  out.conditional = conditional_distance(y_real, g_out, kind);
  out.total = ops::add(out.adversarial, ops::scale(out.conditional, lambda));
  return out;
}

EnergyImage denormalize_output(const Tensor& g_out, double e_max, std::size_t width, std::size_t height,
                               std::size_t offset) {
  if (!(e_max > 0)) throw ContractError("e_max must be positive");
  if (offset + width * height > g_out.size()) throw DimensionError("denormalize_output: tensor too small");
  EnergyImage out(width, height, 1);
  for (std::size_t i = 0; i < width * height; ++i) out.data()[i] = denormalize_energy(g_out[offset + i], e_max);
  return out;
}

float normalize_energy(double w, double e_max) { return static_cast<float>(2.0 * w / e_max - 1.0); }

double denormalize_energy(float g, double e_max) {
  return std::clamp((static_cast<double>(g) + 1.0) / 2.0, 0.0, 1.0) * e_max;
}

template TensorD conditional_distance<double>(const TensorD&, const TensorD&, LossKind);
template Tensor conditional_distance<float>(const Tensor&, const Tensor&, LossKind);
template TensorD discriminator_loss_from_scores<double>(const TensorD&, const TensorD&);
template Tensor discriminator_loss_from_scores<float>(const Tensor&, const Tensor&);
template TensorD generator_adversarial_from_scores<double>(const TensorD&, bool);
template Tensor generator_adversarial_from_scores<float>(const Tensor&, bool);

}  // namespace kcal
