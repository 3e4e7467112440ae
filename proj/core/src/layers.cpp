#include "kcal/layers.hpp"

namespace kcal {

namespace {
constexpr double kInitStd = 0.02;
}

Tensor normal_tensor(const Shape& shape, double mean, double stddev, RandomStream& rng) {
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal(mean, stddev));
  return t;
}

Conv2d::Conv2d(std::size_t in, std::size_t out, int kernel, int stride_, int padding_, bool with_bias,
               RandomStream& rng)
    : has_bias(with_bias), stride(stride_), padding(padding_) {
  const auto k = static_cast<std::size_t>(kernel);
  weight = Parameter(normal_tensor({out, in, k, k}, 0.0, kInitStd, rng));
  if (has_bias) bias = Parameter(Tensor({out}));
}

Tensor Conv2d::forward(const Tensor& x) const {
  return ops::conv2d(x, weight.value, has_bias ? bias.value : Tensor(), stride, padding);
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".weight", &weight});
  if (has_bias) out.push_back({prefix + ".bias", &bias});
}

ConvTranspose2d::ConvTranspose2d(std::size_t in, std::size_t out, int kernel, int stride_, int padding_,
                                 bool with_bias, RandomStream& rng)
    : has_bias(with_bias), stride(stride_), padding(padding_) {
  const auto k = static_cast<std::size_t>(kernel);
  weight = Parameter(normal_tensor({in, out, k, k}, 0.0, kInitStd, rng));
  if (has_bias) bias = Parameter(Tensor({out}));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return ops::conv2d_transpose(x, weight.value, has_bias ? bias.value : Tensor(), stride, padding);
}

void ConvTranspose2d::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".weight", &weight});
  if (has_bias) out.push_back({prefix + ".bias", &bias});
}

BatchNorm2d::BatchNorm2d(std::size_t channels, RandomStream& rng)
    : gamma(normal_tensor({channels}, 1.0, kInitStd, rng)), beta(Tensor({channels})), stats(channels) {}

Tensor BatchNorm2d::forward(const Tensor& x, ops::NormMode mode) {
  return ops::norm2d(x, gamma.value, beta.value, mode, &stats);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &stats.mean});
  out.push_back({prefix + ".running_var", &stats.var});
}

std::size_t parameter_count(const std::vector<NamedParameter>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.param->value.size();
  return n;
}

}  // namespace kcal
