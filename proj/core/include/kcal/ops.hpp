#pragma once

#include <functional>
#include <vector>

#include "kcal/rng.hpp"
#include "kcal/tensor.hpp"

namespace kcal::ops {

// All image tensors are NCHW. Every op records itself on the active tape when
// at least one input requires a gradient.

/// Cross-correlation. weight is (Cout, Cin, kh, kw); bias is (Cout) or
/// undefined. Output extent: floor((in + 2*padding - k) / stride) + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding);

/// Adjoint of conv2d with respect to its input. weight is (Cin, Cout, kh, kw).
/// Output extent: (in - 1) * stride - 2 * padding + k.
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, int stride, int padding);

enum class ActivationKind { relu, leaky_relu, tanh, sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.2;  // leaky_relu only, must lie in (0, 1)
};

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation act);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return activation(x, {ActivationKind::relu});
}
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope) {
  return activation(x, {ActivationKind::leaky_relu, slope});
}
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return activation(x, {ActivationKind::tanh});
}
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return activation(x, {ActivationKind::sigmoid});
}

enum class NormMode { train, eval };

/// Per-channel running statistics used by norm2d in eval mode.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  double momentum = 0.1;

  RunningStats() = default;
  explicit RunningStats(std::size_t channels) : mean(channels, T(0)), var(channels, T(1)) {}
};

/// Batch normalization over (N, H, W) per channel.
///
/// train: normalizes with biased batch statistics and, when `stats` is given,
/// folds the batch mean and unbiased variance into it. eval: normalizes with
/// `stats` (required).
template <typename T>
BasicTensor<T> norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                      const BasicTensor<T>& beta, NormMode mode, RunningStats<T>* stats = nullptr,
                      double eps = 1e-5);

/// Inverted dropout. Draws one uniform per element from `rng` when active.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double rate, RandomStream& rng, bool active);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor);
template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, double value);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x);

/// log(max(x, eps)); the gradient is zero wherever the clamp is active.
template <typename T>
BasicTensor<T> log_clamped(const BasicTensor<T>& x, double eps);

/// d^2 / 2 where |d| < 1, otherwise |d| - linear_offset.
/// linear_offset = 0 is the discontinuous as-written variant, 0.5 the
/// continuous Huber form.
template <typename T>
BasicTensor<T> smooth_l1(const BasicTensor<T>& x, double linear_offset);

/// Elementwise op with a caller-supplied derivative.
template <typename T>
BasicTensor<T> map_elementwise(const BasicTensor<T>& x, std::function<T(T)> f,
                               std::function<T(T)> df, const char* name = "map");

}  // namespace kcal::ops
