#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kcal/error.hpp"
#include "kcal/losses.hpp"
#include "kcal/models.hpp"

namespace kcal {
namespace {

Tensor random_input(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  RandomStream rng(seed);
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

GeneratorConfig tiny_generator(GeneratorKind kind) {
  GeneratorConfig cfg;
  cfg.kind = kind;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.width = cfg.height = 16;
  return cfg;
}

double distance(double y, double g, LossKind kind) {
  return conditional_distance(TensorD::scalar(y), TensorD::scalar(g), kind).item();
}

TEST(GeneratorConfig, ExtentDivisibility) {
  GeneratorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.width >> cfg.depth, 4u);
  cfg.width = 72;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(Generator(cfg, 1), ConfigError);
  cfg.width = 48;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(generator_kind_from_string("encdec"), GeneratorKind::encoder_decoder);
  EXPECT_THROW(generator_kind_from_string("resnet"), ConfigError);
}

TEST(Generator, ShapeContractAndRange) {
  Generator g(GeneratorConfig{}, 3);
  RandomStream noise(1);
  const Tensor y = g.forward(random_input({1, 3, 64, 64}, 2), ops::NormMode::train, true, noise);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 64, 64}));
  for (float v : y.data()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(g.forward(random_input({1, 3, 32, 32}, 2), ops::NormMode::train, false, noise), DimensionError);
}

TEST(Generator, BottleneckIsExtentOverTwoToTheDepth) {
  GeneratorConfig cfg;
  Generator g(cfg, 3);
  // Every encoder level halves the extent: the deepest weight sees 64 / 2^4.
  int strided = 0;
  for (const auto& p : g.parameters())
    if (p.name.rfind("g.down", 0) == 0 && p.name.find(".conv.weight") != std::string::npos) ++strided;
  EXPECT_EQ(strided, cfg.depth);
  EXPECT_EQ(cfg.width / (std::size_t{1} << strided), 4u);
}

TEST(Generator, SkipConnectionsOnlyWidenDecoderInputs) {
  GeneratorConfig cfg;
  GeneratorConfig ed = cfg;
  ed.kind = GeneratorKind::encoder_decoder;
  Generator u(cfg, 5), e(ed, 5);
  std::size_t extra = 0;
  for (int i = 0; i < cfg.depth - 1; ++i) {
    const std::size_t out = i == 0 ? cfg.output_channels : cfg.level_channels(i - 1);
    extra += cfg.level_channels(i) * out * 4 * 4;
  }
  EXPECT_EQ(parameter_count(u.parameters()), parameter_count(e.parameters()) + extra);
  const auto up = u.parameters(), ep = e.parameters();
  ASSERT_EQ(up.size(), ep.size());
  for (std::size_t i = 0; i < up.size(); ++i) {
    EXPECT_EQ(up[i].name, ep[i].name);
    if (up[i].param->value.shape() == ep[i].param->value.shape()) continue;
    EXPECT_NE(up[i].name.find(".conv.weight"), std::string::npos) << up[i].name;
  }
}

TEST(Generator, NoiseControlsStochasticity) {
  Generator g(GeneratorConfig{}, 9);
  const Tensor x = random_input({2, 3, 64, 64}, 4);
  RandomStream a(1), b(1), c(2);
  const Tensor y0 = g.forward(x, ops::NormMode::train, false, a);
  const Tensor y1 = g.forward(x, ops::NormMode::train, false, c);
  for (std::size_t i = 0; i < y0.size(); ++i) ASSERT_EQ(y0[i], y1[i]);
  const Tensor n1 = g.forward(x, ops::NormMode::train, true, b);
  const Tensor n2 = g.forward(x, ops::NormMode::train, true, c);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < n1.size(); ++i) differ += n1[i] != n2[i];
  EXPECT_GT(differ, n1.size() / 2);
}

TEST(Generator, SameSeedSameWeights) {
  Generator a(GeneratorConfig{}, 11), b(GeneratorConfig{}, 11), c(GeneratorConfig{}, 12);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i].param->value.size(); ++j) {
      ASSERT_EQ(pa[i].param->value[j], pb[i].param->value[j]);
      any_diff |= pa[i].param->value[j] != pc[i].param->value[j];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Generator, InitializationStatistics) {
  Generator g(GeneratorConfig{}, 13);
  double s = 0, ss = 0;
  std::size_t n = 0;
  for (const auto& p : g.parameters()) {
    if (p.name.find(".conv.weight") == std::string::npos) continue;
    for (float v : p.param->value.data()) {
      s += v;
      ss += double(v) * v;
      ++n;
    }
  }
  EXPECT_NEAR(s / n, 0.0, 1e-3);
  EXPECT_NEAR(std::sqrt(ss / n), 0.02, 1e-3);
  for (const auto& p : g.parameters())
    if (p.name.find(".bias") != std::string::npos)
      for (float v : p.param->value.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Generator, UnetMatchesEncoderDecoderWhenSkipsAreSilent) {
  GeneratorConfig ucfg = tiny_generator(GeneratorKind::unet);
  GeneratorConfig ecfg = tiny_generator(GeneratorKind::encoder_decoder);
  Generator u(ucfg, 21), e(ecfg, 21);
  RandomStream n1(0), n2(0);
  // Zero input with zero biases leaves every encoder activation at zero.
  const Tensor zero({2, 3, 16, 16}, 0.0f);
  const Tensor yu = u.forward(zero, ops::NormMode::train, false, n1);
  const Tensor ye = e.forward(zero, ops::NormMode::train, false, n2);
  for (std::size_t i = 0; i < yu.size(); ++i) ASSERT_EQ(yu[i], ye[i]);
  const Tensor x = random_input({2, 3, 16, 16}, 22);
  const Tensor xu = u.forward(x, ops::NormMode::train, false, n1);
  const Tensor xe = e.forward(x, ops::NormMode::train, false, n2);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < xu.size(); ++i) differ += xu[i] != xe[i];
  EXPECT_GT(differ, 0u);
}

TEST(Discriminator, PatchGridInUnitInterval) {
  Discriminator d(DiscriminatorConfig{}, 4);
  const Tensor s = d.forward(random_input({2, 3, 64, 64}, 1, 3.0), random_input({2, 1, 64, 64}, 2, 3.0),
                             ops::NormMode::train);
  EXPECT_EQ(s.shape(), (Shape{2, 1, 14, 14}));
  for (float v : s.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(d.forward(random_input({1, 3, 64, 64}, 1), random_input({1, 2, 64, 64}, 2), ops::NormMode::train),
               DimensionError);
}

TEST(Models, ParameterSetsAreDisjoint) {
  Generator g(GeneratorConfig{}, 1);
  Discriminator d(DiscriminatorConfig{}, 2);
  std::set<const Parameter*> ptrs;
  std::set<std::string> names;
  for (const auto& p : g.parameters()) {
    ptrs.insert(p.param);
    names.insert(p.name);
  }
  for (const auto& p : d.parameters()) {
    EXPECT_FALSE(ptrs.count(p.param));
    EXPECT_FALSE(names.count(p.name));
  }
}

TEST(ConditionalDistance, MicroExamples) {
  for (auto k : {LossKind::l1, LossKind::l2, LossKind::smooth_l1_jump, LossKind::smooth_l1_standard})
    EXPECT_EQ(distance(0.3, 0.3, k), 0.0);
  EXPECT_EQ(distance(2, 0, LossKind::l2), 4.0);
  EXPECT_EQ(distance(2, 0, LossKind::l1), 2.0);
  EXPECT_EQ(distance(2, 0, LossKind::smooth_l1_jump), 2.0);
  EXPECT_EQ(distance(2, 0, LossKind::smooth_l1_standard), 1.5);
  EXPECT_EQ(distance(0.5, 0, LossKind::smooth_l1_jump), 0.125);
}

TEST(ConditionalDistance, JumpSmoothL1Discontinuity) {
  const double below = distance(1 - 1e-6, 0, LossKind::smooth_l1_jump);
  EXPECT_NEAR(below, 0.5, 1e-5);
  EXPECT_LT(below, 0.5);
  EXPECT_EQ(distance(1, 0, LossKind::smooth_l1_jump), 1.0);
  EXPECT_NEAR(distance(1, 0, LossKind::smooth_l1_standard) - below, 0.0, 1e-5);
}

TEST(ConditionalDistance, MeanOverElements) {
  const TensorD y({4}, {1, -2, 0.5, 3}), g({4}, {0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(conditional_distance(y, g, LossKind::l1).item(), 6.5 / 4);
  EXPECT_DOUBLE_EQ(conditional_distance(y, g, LossKind::l2).item(), 14.25 / 4);
  EXPECT_DOUBLE_EQ(conditional_distance(y, g, LossKind::smooth_l1_jump).item(), (1 + 2 + 0.125 + 3) / 4);
  EXPECT_THROW(conditional_distance(y, TensorD({3}), LossKind::l1), DimensionError);
}

TEST(ConditionalDistance, Properties) {
  RandomStream rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    TensorD y({16}), g({16});
    for (std::size_t i = 0; i < 16; ++i) {
      y[i] = rng.uniform(-2, 2);
      g[i] = rng.uniform(-2, 2);
    }
    bool any_big = false;
    for (std::size_t i = 0; i < 16; ++i) any_big |= std::abs(y[i] - g[i]) >= 1;
    for (auto k : {LossKind::l1, LossKind::l2, LossKind::smooth_l1_jump, LossKind::smooth_l1_standard}) {
      const double a = conditional_distance(y, g, k).item(), b = conditional_distance(g, y, k).item();
      EXPECT_GT(a, 0.0);
      EXPECT_DOUBLE_EQ(a, b);
    }
    const double std_v = conditional_distance(y, g, LossKind::smooth_l1_standard).item();
    const double jump_v = conditional_distance(y, g, LossKind::smooth_l1_jump).item();
    EXPECT_LE(std_v, jump_v);
    EXPECT_EQ(std_v == jump_v, !any_big);
  }
  EXPECT_STREQ(to_string(loss_kind_from_string("smoothl1-jump")), "smoothl1-jump");
  EXPECT_THROW(loss_kind_from_string("huber"), ConfigError);
}

TEST(DiscriminatorLoss, UninformativePoint) {
  const TensorD half({2, 1, 3, 3}, 0.5);
  EXPECT_NEAR(discriminator_loss_from_scores(half, half).item(), 2 * std::log(2.0), 1e-12);
}

TEST(DiscriminatorLoss, OptimumTendsToZero) {
  double prev = 1e9;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double v = discriminator_loss_from_scores(TensorD({4}, 1 - eps), TensorD({4}, eps)).item();
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-5);
  const double clamped = discriminator_loss_from_scores(TensorD({4}, 0.0), TensorD({4}, 1.0)).item();
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -2 * std::log(1e-8), 1e-6);
}

TEST(DiscriminatorLoss, SymmetricUnderBatchSwap) {
  Discriminator d(DiscriminatorConfig{}, 2);
  const Tensor x = random_input({2, 3, 64, 64}, 1), yr = random_input({2, 1, 64, 64}, 2),
               yf = random_input({2, 1, 64, 64}, 3);
  auto swap = [](const Tensor& t) {
    Tensor s(t.shape());
    const std::size_t half = t.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
      s[i] = t[i + half];
      s[i + half] = t[i];
    }
    return s;
  };
  const double a = discriminator_loss(d, x, yr, yf).item();
  const double b = discriminator_loss(d, swap(x), swap(yr), swap(yf)).item();
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(GeneratorLoss, CombinationArithmetic) {
  // 0.7 adversarial, 0.02 conditional, lambda 100.
  const double adv = 0.7, cond = 0.02;
  const TensorD scores({1}, std::exp(-adv));
  const TensorD a = generator_adversarial_from_scores(scores);
  EXPECT_NEAR(a.item(), adv, 1e-12);
  const TensorD c = conditional_distance(TensorD({1}, cond), TensorD({1}, 0.0), LossKind::l1);
  EXPECT_NEAR(ops::add(a, ops::scale(c, 100.0)).item(), 2.7, 1e-12);
  EXPECT_NEAR(generator_adversarial_from_scores(TensorD({1}, 0.25), true).item(), std::log(0.75), 1e-12);
}

TEST(GeneratorLoss, TotalIsAdversarialPlusWeightedConditional) {
  Discriminator d(DiscriminatorConfig{}, 7);
  const Tensor x = random_input({2, 3, 64, 64}, 1), y = random_input({2, 1, 64, 64}, 2),
               out = random_input({2, 1, 64, 64}, 3, 0.9);
  const GeneratorLoss l0 = generator_loss(d, out, x, y, LossKind::l1, 0.0);
  EXPECT_EQ(l0.total.item(), l0.adversarial.item());
  const GeneratorLoss l = generator_loss(d, out, x, y, LossKind::l2, 100.0);
  EXPECT_NEAR(l.total.item(), l.adversarial.item() + 100.0 * l.conditional.item(), 1e-4);
}

// Gradients of the combined objective on a tiny generator.
class TinyGeneratorGrad : public ::testing::Test {
 protected:
  TinyGeneratorGrad()
      : g(tiny_generator(GeneratorKind::unet), 31), d(DiscriminatorConfig{2, 4, 4}, 32) {
    x = random_input({2, 3, 16, 16}, 33);
    y = random_input({2, 1, 16, 16}, 34, 0.8);
  }

  // Deterministic objective: no dropout, train-mode batch statistics.
  enum class Term { total, adversarial, conditional };
  Tensor objective(Term term) {
    RandomStream noise(1);
    const Tensor out = g.forward(x, ops::NormMode::train, false, noise);
    const GeneratorLoss l = generator_loss(d, out, x, y, LossKind::l1, lambda, false, ops::NormMode::eval);
    return term == Term::total ? l.total : term == Term::adversarial ? l.adversarial : l.conditional;
  }

  std::vector<std::vector<float>> gradients(Term term) {
    const auto params = g.parameters();
    for (const auto& p : params) p.param->value.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(objective(term));
    std::vector<std::vector<float>> out;
    for (const auto& p : params) {
      auto gr = p.param->value.grad();
      out.emplace_back(gr.begin(), gr.end());
    }
    return out;
  }

  Generator g;
  Discriminator d;
  Tensor x, y;
  double lambda = 100.0;
};

TEST_F(TinyGeneratorGrad, TotalGradientDecomposes) {
  const auto total = gradients(Term::total);
  const auto adv = gradients(Term::adversarial);
  const auto cond = gradients(Term::conditional);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < total.size(); ++i)
    for (std::size_t j = 0; j < total[i].size(); ++j) {
      worst = std::max(worst, double(std::abs(total[i][j] - (adv[i][j] + lambda * cond[i][j]))));
      scale = std::max(scale, double(std::abs(total[i][j])));
    }
  EXPECT_LT(worst, 1e-4 * std::max(1.0, scale));
}

// Directional derivative along the gradient equals its norm. A single
// coordinate is too sensitive to activation kinks in float arithmetic.
TEST_F(TinyGeneratorGrad, DirectionalDerivativeMatchesGradientNorm) {
  const auto grad = gradients(Term::total);
  const auto params = g.parameters();
  std::vector<std::vector<float>> base;
  double norm2 = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto v = params[i].param->value.data();
    base.emplace_back(v.begin(), v.end());
    for (float gv : grad[i]) norm2 += double(gv) * gv;
  }
  const double norm = std::sqrt(norm2);
  ASSERT_GT(norm, 0.0);
  auto move = [&](double t) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < base[i].size(); ++j)
        params[i].param->value[j] = static_cast<float>(base[i][j] + t * grad[i][j] / norm);
  };
  Tape::Pause pause;
  const double eps = 1e-3;
  move(eps);
  const double up = objective(Term::total).item();
  move(-eps);
  const double down = objective(Term::total).item();
  move(0);
  EXPECT_NEAR((up - down) / (2 * eps), norm, 0.02 * norm);
}

TEST(Denormalize, EndpointsAndRoundTrip) {
  const double e_max = 7.5;
  EXPECT_EQ(raster_sum(denormalize_output(Tensor({1, 1, 4, 4}, -1.0f), e_max, 4, 4)), 0.0);
  const auto top = denormalize_output(Tensor({1, 1, 4, 4}, 1.0f), e_max, 4, 4);
  for (double v : top.data()) EXPECT_DOUBLE_EQ(v, e_max);
  const auto clamped = denormalize_output(Tensor({1, 1, 2, 2}, -3.0f), e_max, 2, 2);
  for (double v : clamped.data()) EXPECT_EQ(v, 0.0);
  for (float t = -0.99f; t < 1.0f; t += 0.0625f) EXPECT_NEAR(normalize_energy(denormalize_energy(t, e_max), e_max), t, 1e-6);
  // Offset selects the second image of a batch.
  Tensor two({2, 1, 2, 2}, {-1, -1, -1, -1, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(raster_sum(denormalize_output(two, 2.0, 2, 2, 4)), 8.0);
}

}  // namespace
}  // namespace kcal
