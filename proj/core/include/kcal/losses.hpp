#pragma once

#include <string>

#include "kcal/energy.hpp"
#include "kcal/models.hpp"
#include "kcal/tensor.hpp"

namespace kcal {

/// smooth_l1_jump: d^2/2 below |d| = 1 and |d| above, a jump of 1/2 at the
/// boundary. smooth_l1_standard subtracts 1/2 in the linear branch.
enum class LossKind { l1, l2, smooth_l1_jump, smooth_l1_standard };

/// "l1", "l2", "smoothl1-jump", "smoothl1-std".
const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

constexpr double kLogEps = 1e-8;

/// Mean over all elements of the per-element distance between y and g.
template <typename T>
BasicTensor<T> conditional_distance(const BasicTensor<T>& y, const BasicTensor<T>& g, LossKind kind);

/// -[mean log s_real + mean log(1 - s_fake)] on discriminator score grids.
template <typename T>
BasicTensor<T> discriminator_loss_from_scores(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores);

/// Adversarial generator term: -mean log s_fake, or mean log(1 - s_fake) when
/// `saturating`.
template <typename T>
BasicTensor<T> generator_adversarial_from_scores(const BasicTensor<T>& fake_scores, bool saturating = false);

/// Runs D on (x, y_real) and (x, y_fake.detach()).
Tensor discriminator_loss(Discriminator& d, const Tensor& x, const Tensor& y_real, const Tensor& y_fake,
                          ops::NormMode mode = ops::NormMode::train);

struct GeneratorLoss {
  Tensor total;
  Tensor adversarial;
  Tensor conditional;
};

/// total = adversarial + lambda * conditional, where `g_out` is G's output for x.
GeneratorLoss generator_loss(Discriminator& d, const Tensor& g_out, const Tensor& x, const Tensor& y_real,
                             LossKind kind, double lambda, bool saturating = false,
                             ops::NormMode mode = ops::NormMode::train);

/// w = clamp((g + 1) / 2, 0, 1) * e_max for a (1, 1, H, W) or (H, W)-sized tensor
/// holding one image starting at element `offset`.
EnergyImage denormalize_output(const Tensor& g_out, double e_max, std::size_t width, std::size_t height,
                               std::size_t offset = 0);

/// Inverse affine map: 2 * w / e_max - 1.
float normalize_energy(double w, double e_max);
double denormalize_energy(float g, double e_max);

}  // namespace kcal
