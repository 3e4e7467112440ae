#include "kcal/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "kcal/error.hpp"

namespace kcal::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void record(const char* op, const BasicTensor<T>& out, std::function<void()> fn) {
  BasicTape<T>::active()->record(op, out, std::move(fn));
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + (t.defined() ? to_string(t.shape()) : "<undefined>"));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
}

// Geometry of a forward correlation from an image (c, h, w) onto a grid of
// (oh, ow) output positions.
struct ConvGeom {
  std::size_t c, h, w, kh, kw, oh, ow;
  int stride, pad;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
  const std::size_t npos = g.col_cols();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    const T* plane = img + ch * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * npos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Accumulates columns back into the image (adjoint of im2col).
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* img) {
  const std::size_t npos = g.col_cols();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    T* plane = img + ch * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * npos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

long conv_out_extent(long in, long k, int stride, int pad) { return (in + 2L * pad - k) / stride + 1; }

template <typename T>
void check_bias(const BasicTensor<T>& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw DimensionError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                         " does not match " + std::to_string(channels) + " output channels");
  }
}

template <typename T>
void add_bias(BasicTensor<T>& out, const BasicTensor<T>& bias) {
  if (!bias.defined()) return;
  const std::size_t n = out.dim(0), c = out.dim(1), hw = out.dim(2) * out.dim(3);
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T b = bias[ch];
      T* p = o.data() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) p[k] += b;
    }
}

template <typename T>
void accumulate_bias_grad(const BasicTensor<T>& out, const BasicTensor<T>& bias) {
  const std::size_t n = out.dim(0), c = out.dim(1), hw = out.dim(2) * out.dim(3);
  auto go = out.grad();
  auto gb = bias.grad();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = go.data() + (i * c + ch) * hw;
      T acc = 0;
      for (std::size_t k = 0; k < hw; ++k) acc += p[k];
      gb[ch] += acc;
    }
}

template <typename T>
BasicTensor<T> unary(const BasicTensor<T>& x, const char* name, auto&& f, auto&& df_from_xy) {
  BasicTensor<T> out(x.shape());
  auto xi = x.data();
  auto yo = out.data();
  for (std::size_t i = 0; i < xi.size(); ++i) yo[i] = f(xi[i]);
  if (needs_grad<T>({&x})) {
    record<T>(name, out, [x, out, df_from_xy]() mutable {
      if (!x.requires_grad()) return;
      auto gx = x.grad();
      auto go = out.grad();
      auto xv = x.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * df_from_xy(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride < 1 || padding < 0) throw ContractError("conv2d: stride must be >= 1 and padding >= 0");
  if (input.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: input " + to_string(input.shape()) + " has " +
                         std::to_string(input.dim(1)) + " channels but weight " +
                         to_string(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  const std::size_t n = input.dim(0), cout = weight.dim(0);
  check_bias(bias, cout, "conv2d");
  const long oh = conv_out_extent(static_cast<long>(input.dim(2)), static_cast<long>(weight.dim(2)), stride, padding);
  const long ow = conv_out_extent(static_cast<long>(input.dim(3)), static_cast<long>(weight.dim(3)), stride, padding);
  if (oh < 1 || ow < 1) {
    throw DimensionError("conv2d: kernel " + to_string(weight.shape()) + " does not fit input " +
                         to_string(input.shape()));
  }
  const ConvGeom g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3),
                   static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), stride, padding};
  BasicTensor<T> out(Shape{n, cout, g.oh, g.ow});
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const ConstMatMap<T> wmat(weight.data().data(), cout, g.col_rows());
  const std::size_t in_stride = g.c * g.h * g.w, out_stride = cout * g.col_cols();
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.data().data() + i * in_stride, g, cols.data());
    const ConstMatMap<T> cm(cols.data(), g.col_rows(), g.col_cols());
    MatMap<T> om(out.data().data() + i * out_stride, cout, g.col_cols());
    om.noalias() = wmat * cm;
  }
  add_bias(out, bias);

  if (needs_grad<T>({&input, &weight, &bias})) {
    record<T>("conv2d", out, [input, weight, bias, out, g]() mutable {
      const std::size_t n = input.dim(0), cout = weight.dim(0);
      const std::size_t in_stride = g.c * g.h * g.w, out_stride = cout * g.col_cols();
      std::vector<T> cols(g.col_rows() * g.col_cols());
      auto gout = out.grad();
      const ConstMatMap<T> wmat(weight.data().data(), cout, g.col_rows());
      for (std::size_t i = 0; i < n; ++i) {
        const ConstMatMap<T> gom(gout.data() + i * out_stride, cout, g.col_cols());
        if (weight.requires_grad()) {
          im2col(input.data().data() + i * in_stride, g, cols.data());
          const ConstMatMap<T> cm(cols.data(), g.col_rows(), g.col_cols());
          MatMap<T> gw(weight.grad().data(), cout, g.col_rows());
          gw.noalias() += gom * cm.transpose();
        }
        if (input.requires_grad()) {
          MatMap<T> dcols(cols.data(), g.col_rows(), g.col_cols());
          dcols.noalias() = wmat.transpose() * gom;
          col2im(cols.data(), g, input.grad().data() + i * in_stride);
        }
      }
      if (bias.defined() && bias.requires_grad()) accumulate_bias_grad(out, bias);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d_transpose", "input");
  require_rank(weight, 4, "conv2d_transpose", "weight");
  if (stride < 1 || padding < 0) {
    throw ContractError("conv2d_transpose: stride must be >= 1 and padding >= 0");
  }
  if (input.dim(1) != weight.dim(0)) {
    throw DimensionError("conv2d_transpose: input " + to_string(input.shape()) + " has " +
                         std::to_string(input.dim(1)) + " channels but weight " +
                         to_string(weight.shape()) + " expects " + std::to_string(weight.dim(0)));
  }
  const std::size_t n = input.dim(0), cin = input.dim(1), cout = weight.dim(1);
  check_bias(bias, cout, "conv2d_transpose");
  const long oh = (static_cast<long>(input.dim(2)) - 1) * stride - 2L * padding + static_cast<long>(weight.dim(2));
  const long ow = (static_cast<long>(input.dim(3)) - 1) * stride - 2L * padding + static_cast<long>(weight.dim(3));
  if (oh < 1 || ow < 1) {
    throw DimensionError("conv2d_transpose: padding too large for input " + to_string(input.shape()) +
                         " and weight " + to_string(weight.shape()));
  }
  // The output image plays the role of a conv2d input; the input grid plays
  // the role of conv2d output positions.
  const ConvGeom g{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), weight.dim(2),
                   weight.dim(3), input.dim(2), input.dim(3), stride, padding};
  BasicTensor<T> out(Shape{n, cout, g.h, g.w});
  std::vector<T> cols(g.col_rows() * g.col_cols());
  const ConstMatMap<T> wmat(weight.data().data(), cin, g.col_rows());
  const std::size_t in_stride = cin * g.col_cols(), out_stride = cout * g.h * g.w;
  for (std::size_t i = 0; i < n; ++i) {
    const ConstMatMap<T> xm(input.data().data() + i * in_stride, cin, g.col_cols());
    MatMap<T> cm(cols.data(), g.col_rows(), g.col_cols());
    cm.noalias() = wmat.transpose() * xm;
    col2im(cols.data(), g, out.data().data() + i * out_stride);
  }
  add_bias(out, bias);

  if (needs_grad<T>({&input, &weight, &bias})) {
    record<T>("conv2d_transpose", out, [input, weight, bias, out, g]() mutable {
      const std::size_t n = input.dim(0), cin = input.dim(1), cout = weight.dim(1);
      const std::size_t in_stride = cin * g.col_cols(), out_stride = cout * g.h * g.w;
      std::vector<T> cols(g.col_rows() * g.col_cols());
      auto gout = out.grad();
      const ConstMatMap<T> wmat(weight.data().data(), cin, g.col_rows());
      for (std::size_t i = 0; i < n; ++i) {
        im2col(gout.data() + i * out_stride, g, cols.data());
        const ConstMatMap<T> dcols(cols.data(), g.col_rows(), g.col_cols());
        if (input.requires_grad()) {
          MatMap<T> gx(input.grad().data() + i * in_stride, cin, g.col_cols());
          gx.noalias() += wmat * dcols;
        }
        if (weight.requires_grad()) {
          const ConstMatMap<T> xm(input.data().data() + i * in_stride, cin, g.col_cols());
          MatMap<T> gw(weight.grad().data(), cin, g.col_rows());
          gw.noalias() += xm * dcols.transpose();
        }
      }
      if (bias.defined() && bias.requires_grad()) accumulate_bias_grad(out, bias);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation act) {
  switch (act.kind) {
    case ActivationKind::relu:
      return unary(input, "relu", [](T x) { return x > T(0) ? x : T(0); },
                   [](T x, T) { return x > T(0) ? T(1) : T(0); });
    case ActivationKind::leaky_relu: {
      if (!(act.slope > 0.0 && act.slope < 1.0)) {
        throw ContractError("leaky_relu: slope must lie in (0, 1), got " + std::to_string(act.slope));
      }
      const T s = static_cast<T>(act.slope);
      return unary(input, "leaky_relu", [s](T x) { return x > T(0) ? x : s * x; },
                   [s](T x, T) { return x > T(0) ? T(1) : s; });
    }
    case ActivationKind::tanh:
      return unary(input, "tanh", [](T x) { return std::tanh(x); },
                   [](T, T y) { return T(1) - y * y; });
    case ActivationKind::sigmoid:
      return unary(
          input, "sigmoid",
          [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
          },
          [](T, T y) { return y * (T(1) - y); });
  }
  throw ContractError("activation: unknown kind");
}

template <typename T>
BasicTensor<T> norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                      const BasicTensor<T>& beta, NormMode mode, RunningStats<T>* stats,
                      double eps) {
  require_rank(input, 4, "norm2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("norm2d: gamma " + to_string(gamma.shape()) + " / beta " +
                         to_string(beta.shape()) + " do not match " + std::to_string(c) +
                         " channels of input " + to_string(input.shape()));
  }
  if (stats && (stats->mean.size() != c || stats->var.size() != c)) {
    throw DimensionError("norm2d: running statistics hold " + std::to_string(stats->mean.size()) +
                         " channels, input has " + std::to_string(c));
  }
  if (mode == NormMode::eval && stats == nullptr) {
    throw ContractError("norm2d: eval mode requires running statistics");
  }
  const std::size_t m = n * hw;
  std::vector<T> mu(c), inv_std(c);
  auto x = input.data();
  if (mode == NormMode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      const double mean = s / static_cast<double>(m);
      double ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) ss += (p[k] - mean) * (p[k] - mean);
      }
      const double var = ss / static_cast<double>(m);
      mu[ch] = static_cast<T>(mean);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      if (stats) {
        const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
        const double mom = stats->momentum;
        stats->mean[ch] = static_cast<T>((1.0 - mom) * stats->mean[ch] + mom * mean);
        stats->var[ch] = static_cast<T>((1.0 - mom) * stats->var[ch] + mom * unbiased);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats->mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats->var[ch]) + eps));
    }
  }

  BasicTensor<T> out(input.shape());
  std::vector<T> xhat(input.size());
  auto y = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        xhat[off + k] = (x[off + k] - mu[ch]) * inv_std[ch];
        y[off + k] = gamma[ch] * xhat[off + k] + beta[ch];
      }
    }

  if (needs_grad<T>({&input, &gamma, &beta})) {
    record<T>("norm2d", out,
              [input, gamma, beta, out, mode, inv_std, xhat = std::move(xhat)]() mutable {
                const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
                const double m = static_cast<double>(n * hw);
                auto gy = out.grad();
                for (std::size_t ch = 0; ch < c; ++ch) {
                  double sum_g = 0, sum_gx = 0;
                  for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t off = (i * c + ch) * hw;
                    for (std::size_t k = 0; k < hw; ++k) {
                      sum_g += gy[off + k];
                      sum_gx += gy[off + k] * xhat[off + k];
                    }
                  }
                  if (gamma.requires_grad()) gamma.grad()[ch] += static_cast<T>(sum_gx);
                  if (beta.requires_grad()) beta.grad()[ch] += static_cast<T>(sum_g);
                  if (!input.requires_grad()) continue;
                  auto gx = input.grad();
                  const double scale = static_cast<double>(gamma[ch]) * inv_std[ch];
                  for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t off = (i * c + ch) * hw;
                    for (std::size_t k = 0; k < hw; ++k) {
                      if (mode == NormMode::train) {
                        gx[off + k] += static_cast<T>(
                            scale * (gy[off + k] - sum_g / m - xhat[off + k] * sum_gx / m));
                      } else {
                        gx[off + k] += static_cast<T>(scale * gy[off + k]);
                      }
                    }
                  }
                }
              });
  }
  return out;
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double rate, RandomStream& rng, bool active) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!active || rate == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(input.size());
  for (auto& v : mask) v = rng.uniform() < rate ? T(0) : keep_scale;
  BasicTensor<T> out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < mask.size(); ++i) y[i] = x[i] * mask[i];
  if (needs_grad<T>({&input})) {
    record<T>("dropout", out, [input, out, mask = std::move(mask)]() mutable {
      if (!input.requires_grad()) return;
      auto gx = input.grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 4, "concat_channels", "first input");
  require_rank(b, 4, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " disagree on batch or spatial extent");
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  BasicTensor<T> out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  auto y = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
    std::copy_n(b.data().data() + i * cb * hw, cb * hw, y.data() + (i * (ca + cb) + ca) * hw);
  }
  if (needs_grad<T>({&a, &b})) {
    record<T>("concat_channels", out, [a, b, out]() mutable {
      const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
      auto go = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (a.requires_grad()) {
          auto ga = a.grad();
          const T* src = go.data() + i * (ca + cb) * hw;
          for (std::size_t k = 0; k < ca * hw; ++k) ga[i * ca * hw + k] += src[k];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          const T* src = go.data() + (i * (ca + cb) + ca) * hw;
          for (std::size_t k = 0; k < cb * hw; ++k) gb[i * cb * hw + k] += src[k];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count) {
  require_rank(input, 4, "slice_channels", "input");
  if (count == 0 || begin + count > input.dim(1)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside input " + to_string(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  BasicTensor<T> out(Shape{n, count, input.dim(2), input.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(input.data().data() + (i * c + begin) * hw, count * hw, out.data().data() + i * count * hw);
  }
  if (needs_grad<T>({&input})) {
    record<T>("slice_channels", out, [input, out, begin, count]() mutable {
      if (!input.requires_grad()) return;
      const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
      auto gx = input.grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < count * hw; ++k) gx[(i * c + begin) * hw + k] += go[i * count * hw + k];
    });
  }
  return out;
}

namespace {

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name, auto&& f,
                      auto&& dfa, auto&& dfb) {
  require_same_shape(a, b, name);
  BasicTensor<T> out(a.shape());
  auto av = a.data();
  auto bv = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i], bv[i]);
  if (needs_grad<T>({&a, &b})) {
    record<T>(name, out, [a, b, out, dfa, dfb]() mutable {
      auto go = out.grad();
      auto av = a.data();
      auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfa(av[i], bv[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * dfb(av[i], bv[i]);
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
                [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
                [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                [](T x, T) { return x; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor) {
  const T s = static_cast<T>(factor);
  return unary(x, "scale", [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, double value) {
  const T c = static_cast<T>(value);
  return unary(x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (needs_grad<T>({&x})) {
    record<T>("sum", out, [x, out]() mutable {
      if (!x.requires_grad()) return;
      const T g = out.grad()[0];
      for (auto& v : x.grad()) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc * inv_n));
  if (needs_grad<T>({&x})) {
    record<T>("mean", out, [x, out, inv_n]() mutable {
      if (!x.requires_grad()) return;
      const T g = static_cast<T>(out.grad()[0] * inv_n);
      for (auto& v : x.grad()) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary(x, "abs", [](T v) { return std::abs(v); },
               [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> log_clamped(const BasicTensor<T>& x, double eps) {
  const T e = static_cast<T>(eps);
  return unary(x, "log_clamped", [e](T v) { return std::log(std::max(v, e)); },
               [e](T v, T) { return v > e ? T(1) / v : T(0); });
}

template <typename T>
BasicTensor<T> smooth_l1(const BasicTensor<T>& x, double linear_offset) {
  const T off = static_cast<T>(linear_offset);
  return unary(
      x, "smooth_l1",
      [off](T d) { return std::abs(d) < T(1) ? d * d / T(2) : std::abs(d) - off; },
      [](T d, T) {
        if (std::abs(d) < T(1)) return d;
        return d > T(0) ? T(1) : T(-1);
      });
}

template <typename T>
BasicTensor<T> map_elementwise(const BasicTensor<T>& x, std::function<T(T)> f, std::function<T(T)> df,
                               const char* name) {
  return unary(x, name, [f](T v) { return f(v); }, [df](T v, T) { return df(v); });
}

#define KCAL_INSTANTIATE_OPS(T)                                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&, int, int);                                 \
  template BasicTensor<T> conv2d_transpose(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                           const BasicTensor<T>&, int, int);                       \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                           \
  template BasicTensor<T> norm2d(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&, NormMode, RunningStats<T>*, double);       \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, RandomStream&, bool);             \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                    \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                              \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                             \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                              \
  template BasicTensor<T> square(const BasicTensor<T>&);                                           \
  template BasicTensor<T> log_clamped(const BasicTensor<T>&, double);                              \
  template BasicTensor<T> smooth_l1(const BasicTensor<T>&, double);                                \
  template BasicTensor<T> map_elementwise(const BasicTensor<T>&, std::function<T(T)>,              \
                                          std::function<T(T)>, const char*);

KCAL_INSTANTIATE_OPS(float)
KCAL_INSTANTIATE_OPS(double)

#undef KCAL_INSTANTIATE_OPS

}  // namespace kcal::ops
