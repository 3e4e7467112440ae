#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "kcal/error.hpp"
#include "kcal/grad_check.hpp"
#include "kcal/ops.hpp"
#include "kcal/rng.hpp"
#include "kcal/tensor.hpp"
#include "grad_cases.hpp"

namespace kcal {
namespace {

TensorD random_tensor(const Shape& shape, std::uint64_t seed) {
  RandomStream rng(seed);
  TensorD t(shape);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct definition of cross-correlation, used as the oracle.
std::vector<double> direct_conv(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int pad) {
  const long n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const long cout = w.dim(0), k = w.dim(2);
  const long oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  for (long in = 0; in < n; ++in)
    for (long co = 0; co < cout; ++co)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b[co] : 0.0;
          for (long ci = 0; ci < cin; ++ci)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += x[((in * cin + ci) * h + iy) * wd + ix] * w[((co * cin + ci) * k + ky) * k + kx];
              }
          out[((in * cout + co) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

// Each input value scattered through the kernel into the output.
std::vector<double> scatter_conv_transpose(const TensorD& x, const TensorD& w, const TensorD& b, int stride,
                                           int pad) {
  const long n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const long cout = w.dim(1), k = w.dim(2);
  const long oh = (h - 1) * stride - 2 * pad + k, ow = (wd - 1) * stride - 2 * pad + k;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  for (long in = 0; in < n; ++in)
    for (long co = 0; co < cout; ++co)
      for (long i = 0; i < oh * ow; ++i) out[(in * cout + co) * oh * ow + i] = b.defined() ? b[co] : 0.0;
  for (long in = 0; in < n; ++in)
    for (long ci = 0; ci < cin; ++ci)
      for (long iy = 0; iy < h; ++iy)
        for (long ix = 0; ix < wd; ++ix)
          for (long co = 0; co < cout; ++co)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long oy = iy * stride - pad + ky, ox = ix * stride - pad + kx;
                if (oy < 0 || ox < 0 || oy >= oh || ox >= ow) continue;
                out[((in * cout + co) * oh + oy) * ow + ox] +=
                    x[((in * cin + ci) * h + iy) * wd + ix] * w[((ci * cout + co) * k + ky) * k + kx];
              }
  return out;
}

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(numel(t.shape()), t.size());
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}

TEST(Tensor, CloneIsDeepDetachCutsGradient) {
  Tensor a({2}, {1, 2}, true);
  Tensor c = a.clone();
  c[0] = 9;
  EXPECT_EQ(a[0], 1);
  EXPECT_FALSE(a.detach().requires_grad());
}

TEST(Conv2d, IdentityKernel) {
  TensorD x = random_tensor({1, 1, 4, 4}, 3);
  TensorD w({1, 1, 1, 1}, 1.0);
  TensorD b({1}, 0.0);
  TensorD y = ops::conv2d(x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, SumKernel) {
  TensorD x({1, 1, 3, 3}, 1.0);
  TensorD w({1, 1, 3, 3}, 1.0);
  TensorD y = ops::conv2d(x, w, TensorD({1}, 0.0), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Conv2d, MatchesDirectOracle) {
  TensorD x = random_tensor({1, 2, 8, 8}, 11);
  TensorD w = random_tensor({4, 2, 3, 3}, 12);
  TensorD b = random_tensor({4}, 13);
  TensorD y = ops::conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 4, 4}));
  const auto ref = direct_conv(x, w, b, 2, 1);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6 * std::max(1.0, std::abs(ref[i])));
}

TEST(Conv2d, SinglePrecisionMatchesOracle) {
  TensorD xd = random_tensor({2, 3, 9, 7}, 21), wd = random_tensor({5, 3, 4, 4}, 22), bd = random_tensor({5}, 23);
  auto to_float = [](const TensorD& t) {
    Tensor f(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) f[i] = static_cast<float>(t[i]);
    return f;
  };
  Tensor y = ops::conv2d(to_float(xd), to_float(wd), to_float(bd), 2, 1);
  const auto ref = direct_conv(xd, wd, bd, 2, 1);
  ASSERT_EQ(y.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5);
}

TEST(Conv2d, ShapeClosedForm) {
  for (int in : {4, 5, 8, 13}) {
    for (int k : {1, 3, 4}) {
      for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
          if (in + 2 * pad < k) continue;
          TensorD y = ops::conv2d(TensorD({1, 1, std::size_t(in), std::size_t(in)}, 1.0),
                                  TensorD({2, 1, std::size_t(k), std::size_t(k)}, 1.0), TensorD(), stride, pad);
          EXPECT_EQ(y.dim(2), std::size_t((in + 2 * pad - k) / stride + 1));
          EXPECT_EQ(y.dim(1), 2u);
        }
      }
    }
  }
}

TEST(Conv2d, ChannelMismatchNamesShapes) {
  try {
    ops::conv2d(TensorD({1, 2, 4, 4}), TensorD({1, 3, 3, 3}), TensorD(), 1, 0);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x2x4x4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[1x3x3x3]"), std::string::npos) << msg;
  }
}

TEST(ConvTranspose2d, BroadcastsThroughKernel) {
  TensorD x({1, 1, 1, 1}, 5.0);
  TensorD y = ops::conv2d_transpose(x, TensorD({1, 1, 2, 2}, 1.0), TensorD({1}, 0.0), 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[i], 5.0);
}

TEST(ConvTranspose2d, ShapeRoundTrip) {
  TensorD x = random_tensor({1, 3, 8, 6}, 5);
  TensorD w = random_tensor({3, 3, 2, 2}, 6);
  TensorD down = ops::conv2d(x, w, TensorD(), 2, 0);
  TensorD up = ops::conv2d_transpose(down, w, TensorD(), 2, 0);
  EXPECT_EQ(up.shape(), x.shape());
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
  TensorD x = random_tensor({2, 3, 5, 4}, 31);
  TensorD w = random_tensor({3, 2, 4, 4}, 32);
  TensorD b = random_tensor({2}, 33);
  TensorD y = ops::conv2d_transpose(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 10, 8}));
  const auto ref = scatter_conv_transpose(x, w, b, 2, 1);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-9);
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  // <conv(x), y> == <x, conv_t(y)> for the same weight.
  TensorD x = random_tensor({1, 2, 8, 8}, 41);
  TensorD w = random_tensor({3, 2, 4, 4}, 42);
  TensorD cx = ops::conv2d(x, w, TensorD(), 2, 1);
  TensorD y = random_tensor(cx.shape(), 43);
  TensorD ty = ops::conv2d_transpose(y, w, TensorD(), 2, 1);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST(Activation, PointValues) {
  TensorD x({2}, {-3.0, 2.0});
  TensorD r = ops::relu(x);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  EXPECT_EQ(ops::tanh(TensorD::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(ops::sigmoid(TensorD::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(ops::leaky_relu(TensorD::scalar(-2.0), 0.2).item(), -0.4, 1e-15);
}

TEST(Activation, RangesAndSlopeContract) {
  TensorD x = random_tensor({100}, 9);
  for (auto& v : x.data()) v *= 20;
  TensorD t = ops::tanh(x), s = ops::sigmoid(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(std::abs(t[i]), 1.0);
    EXPECT_GE(s[i], 0.0);
    EXPECT_LE(s[i], 1.0);
  }
  EXPECT_THROW(ops::leaky_relu(x, 0.0), ContractError);
  EXPECT_THROW(ops::leaky_relu(x, 1.0), ContractError);
}

TEST(Norm2d, ConstantChannelGivesBeta) {
  TensorD x({2, 1, 2, 2}, 3.0);
  TensorD y = ops::norm2d(x, TensorD({1}, 2.0), TensorD({1}, 0.7), ops::NormMode::train);
  for (double v : y.data()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Norm2d, HandComputedPair) {
  TensorD x({1, 1, 1, 2}, {1.0, 3.0});
  TensorD y = ops::norm2d(x, TensorD({1}, 1.0), TensorD({1}, 0.0), ops::NormMode::train);
  // mean 2, biased variance 1: (x - 2) / sqrt(1 + 1e-5).
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(Norm2d, TrainModeStandardizesEachChannel) {
  TensorD x = random_tensor({3, 2, 4, 5}, 17);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 4 * x[i] + 10;
  TensorD y = ops::norm2d(x, TensorD({2}, 1.0), TensorD({2}, 0.0), ops::NormMode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, ss = 0;
    int n = 0;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 20; ++i) {
        const double v = y[(b * 2 + c) * 20 + i];
        s += v;
        ss += v * v;
        ++n;
      }
    EXPECT_NEAR(s / n, 0.0, 1e-9);
    EXPECT_NEAR(ss / n, 1.0, 1e-3);
  }
}

TEST(Norm2d, EvalUsesRunningStatistics) {
  ops::RunningStats<double> stats(1);
  TensorD x({1, 1, 1, 2}, {1.0, 3.0});
  ops::norm2d(x, TensorD({1}, 1.0), TensorD({1}, 0.0), ops::NormMode::train, &stats);
  EXPECT_NEAR(stats.mean[0], 0.2, 1e-12);         // 0.9 * 0 + 0.1 * 2
  EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * 2, 1e-12);  // unbiased batch variance 2
  TensorD y = ops::norm2d(TensorD({1, 1, 1, 1}, 0.2), TensorD({1}, 1.0), TensorD({1}, 0.5), ops::NormMode::eval,
                          &stats);
  EXPECT_NEAR(y[0], 0.5, 1e-12);
  EXPECT_THROW(ops::norm2d(x, TensorD({1}, 1.0), TensorD({1}, 0.0), ops::NormMode::eval), ContractError);
}

TEST(Norm2d, ChannelMismatch) {
  EXPECT_THROW(ops::norm2d(TensorD({1, 2, 2, 2}), TensorD({3}, 1.0), TensorD({3}), ops::NormMode::train),
               DimensionError);
}

TEST(Dropout, IdentityCases) {
  TensorD x = random_tensor({50}, 3);
  RandomStream rng(1);
  TensorD a = ops::dropout(x, 0.0, rng, true);
  TensorD b = ops::dropout(x, 0.7, rng, false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(a[i], x[i]);
    EXPECT_EQ(b[i], x[i]);
  }
}

TEST(Dropout, PreservesMeanAndZeroesHalf) {
  Tensor x({100000}, 1.0f);
  RandomStream rng(99);
  Tensor y = ops::dropout(x, 0.5, rng, true);
  double sum = 0;
  std::size_t zeros = 0;
  for (float v : y.data()) {
    sum += v;
    zeros += v == 0.0f;
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
  }
  EXPECT_NEAR(sum / 100000.0, 1.0, 0.01);
  EXPECT_NEAR(zeros / 100000.0, 0.5, 0.01);
}

TEST(Dropout, RateContract) {
  RandomStream rng(1);
  EXPECT_THROW(ops::dropout(TensorD({2}), 1.0, rng, true), ContractError);
  EXPECT_THROW(ops::dropout(TensorD({2}), -0.1, rng, true), ContractError);
}

TEST(Concat, ShapeRoundTripAndGradient) {
  TensorD a = random_tensor({1, 2, 4, 4}, 1), b = random_tensor({1, 3, 4, 4}, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  TapeD tape;
  TapeD::Scope scope(tape);
  TensorD c = ops::concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 5, 4, 4}));
  TensorD sa = ops::slice_channels(c, 0, 2), sb = ops::slice_channels(c, 2, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(sa[i], a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(sb[i], b[i]);
  backward(ops::sum(c));
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Concat, SpatialMismatch) {
  EXPECT_THROW(ops::concat_channels(TensorD({1, 1, 4, 4}), TensorD({1, 1, 4, 3})), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  TensorD x = random_tensor({2, 3, 2}, 4);
  x.set_requires_grad(true);
  TapeD tape;
  TapeD::Scope scope(tape);
  backward(ops::sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  TensorD x({1}, 3.0, true);
  TapeD tape;
  TapeD::Scope scope(tape);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossRejected) {
  TensorD x({3}, 1.0, true);
  TapeD tape;
  TapeD::Scope scope(tape);
  TensorD y = ops::scale(x, 2.0);
  EXPECT_THROW(backward(y), ContractError);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  TensorD x({1}, 3.0, true);
  for (int i = 0; i < 2; ++i) {
    TapeD tape;
    TapeD::Scope scope(tape);
    backward(ops::sum(ops::scale(x, 2.0)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Backward, OffPathTensorsKeepZeroGradient) {
  TensorD x({2}, 1.0, true), unused({2}, 1.0, true);
  TapeD tape;
  TapeD::Scope scope(tape);
  TensorD other = ops::scale(unused, 3.0);
  (void)other;
  backward(ops::sum(ops::square(x)));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tape, ReplaysInExactReverseOrder) {
  TensorD x({2}, 0.5, true);
  TapeD tape;
  TapeD::Scope scope(tape);
  TensorD y = ops::tanh(ops::scale(ops::square(x), 2.0));
  TensorD loss = ops::sum(y);
  std::vector<std::size_t> order;
  tape.backward(loss, [&](std::size_t i) { order.push_back(i); });
  ASSERT_EQ(order.size(), tape.size());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], tape.size() - 1 - i);
  tape.clear();
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, PauseStopsRecording) {
  TensorD x({2}, 0.5, true);
  TapeD tape;
  TapeD::Scope scope(tape);
  {
    TapeD::Pause pause;
    ops::square(x);
  }
  EXPECT_EQ(tape.size(), 0u);
  ops::square(x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  Tensor x({1, 2, 8, 8});
  Tensor w({3, 2, 3, 3});
  RandomStream rng(5);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor a = ops::conv2d(x, w, Tensor(), 1, 1), b = ops::conv2d(x, w, Tensor(), 1, 1);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

// ---- finite-difference suite ------------------------------------------------

class GradSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradSuite, MatchesCentralDifferences) {
  const auto cases = test::grad_cases();
  const test::GradCase& c = cases[GetParam()];
  std::uint64_t seed = 100;
  for (const auto& shapes : c.shapes) {
    GradCheckOptions opt = c.options;
    opt.seed = seed++;
    const GradCheckReport r = grad_check(c.fn, shapes, 1e-4, opt);
    EXPECT_TRUE(r.passed) << c.name << " worst " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(EveryOp, GradSuite, ::testing::Range<std::size_t>(0, test::grad_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return std::string(test::grad_cases()[info.param].name);
                         });

TEST(GradCheck, ConvAndTanhTolerances) {
  auto conv = [](const std::vector<TensorD>& in) { return ops::conv2d(in[0], in[1], TensorD(), 1, 1); };
  EXPECT_LT(grad_check(conv, {{1, 2, 5, 5}, {2, 2, 3, 3}}, 1e-4).worst, 1e-4);
  auto th = [](const std::vector<TensorD>& in) { return ops::tanh(in[0]); };
  EXPECT_LT(grad_check(th, {{4, 4}}, 1e-6).worst, 1e-6);
}

TEST(GradCheck, CorruptedGradientIsReported) {
  auto corrupted = [](const std::vector<TensorD>& in) {
    return ops::map_elementwise<double>(
        in[0], [](double x) { return std::sin(x); }, [](double x) { return 1.01 * std::cos(x); }, "bad_sin");
  };
  const GradCheckReport r = grad_check(corrupted, {{6}}, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.worst, 1e-3);
}

}  // namespace
}  // namespace kcal
