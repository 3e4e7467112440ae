#pragma once

#include <string>
#include <vector>

#include "kcal/ops.hpp"
#include "kcal/rng.hpp"
#include "kcal/tensor.hpp"

namespace kcal {

struct NamedParameter {
  std::string name;
  Parameter* param;
};

struct NamedBuffer {
  std::string name;
  std::vector<float>* values;
};

/// Tensor of `shape` with entries drawn from N(mean, stddev).
Tensor normal_tensor(const Shape& shape, double mean, double stddev, RandomStream& rng);

struct Conv2d {
  Parameter weight;  // (out, in, k, k)
  Parameter bias;    // (out); absent when has_bias is false
  bool has_bias = true;
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, int kernel, int stride, int padding, bool bias, RandomStream& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

struct ConvTranspose2d {
  Parameter weight;  // (in, out, k, k)
  Parameter bias;
  bool has_bias = true;
  int stride = 1;
  int padding = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, int kernel, int stride, int padding, bool bias,
                  RandomStream& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

struct BatchNorm2d {
  Parameter gamma;  // N(1, 0.02)
  Parameter beta;   // zero
  ops::RunningStats<float> stats;

  BatchNorm2d() = default;
  BatchNorm2d(std::size_t channels, RandomStream& rng);
  /// Train mode updates the running statistics.
  Tensor forward(const Tensor& x, ops::NormMode mode);
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);
};

std::size_t parameter_count(const std::vector<NamedParameter>& params);

}  // namespace kcal
