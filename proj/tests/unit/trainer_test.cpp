#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "kcal/dataset.hpp"
#include "kcal/edm.hpp"
#include "kcal/error.hpp"
#include "kcal/trainer.hpp"
#include "test_support.hpp"

namespace kcal {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.generator.depth = 3;
  cfg.generator.base_channels = 4;
  cfg.generator.width = cfg.generator.height = 32;
  cfg.discriminator.base_channels = 4;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.checkpoint_interval = 1;
  cfg.seed = 5;
  return cfg;
}

std::vector<float> flatten(const std::vector<NamedParameter>& params) {
  std::vector<float> out;
  for (const auto& p : params) out.insert(out.end(), p.param->value.data().begin(), p.param->value.data().end());
  return out;
}

std::size_t parse_lines(const fs::path& file) {
  const auto bytes = read_file_bytes(file);
  return static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
}

// Shared 32x32 dataset: 6 train and 2 test pairs.
class TrainerData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("trainer");
    const DatasetManifest m =
        build_dataset(SceneSpec::with_extent(32, 32), 8, {}, 0.75, 0.25, dir_->path() / "data");
    digest_ = new std::string(manifest_digest(m));
    train_ = new TensorDataset(TensorDataset::from_pairs(load_split(m, "train"), m.e_max));
    test_ = new TensorDataset(TensorDataset::from_pairs(load_split(m, "test"), m.e_max));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete test_;
    delete digest_;
    delete dir_;
  }

  static test::TempDir* dir_;
  static std::string* digest_;
  static TensorDataset* train_;
  static TensorDataset* test_;
};

test::TempDir* TrainerData::dir_ = nullptr;
std::string* TrainerData::digest_ = nullptr;
TensorDataset* TrainerData::train_ = nullptr;
TensorDataset* TrainerData::test_ = nullptr;

TEST(Adam, MatchesReferenceRecurrence) {
  const AdamConfig cfg{0.01, 0.5, 0.999, 1e-8};
  Parameter p(Tensor({2}, {1.0f, -2.0f}, true));
  const double grads[4][2] = {{0.3, -1.0}, {0.1, -0.5}, {-0.2, 2.0}, {0.05, 0.0}};
  double x[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 4; ++t) {
    for (int i = 0; i < 2; ++i) {
      p.value.grad()[static_cast<std::size_t>(i)] = static_cast<float>(grads[t - 1][i]);
      m[i] = 0.5 * m[i] + 0.5 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      x[i] -= 0.01 * (m[i] / (1 - std::pow(0.5, t))) / (std::sqrt(v[i] / (1 - std::pow(0.999, t))) + 1e-8);
    }
    adam_step(p, cfg);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(p.value[static_cast<std::size_t>(i)], x[i], 1e-6) << "step " << t;
  }
  EXPECT_EQ(p.step_count, 4u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const AdamConfig cfg{0.001, 0.5, 0.999, 1e-8};
  Parameter p(Tensor({3}, {0.0f, 0.0f, 0.0f}, true));
  p.value.grad()[0] = 3.0f;
  p.value.grad()[1] = -0.01f;
  adam_step(p, cfg);
  EXPECT_NEAR(p.value[0], -0.001, 1e-8);
  EXPECT_NEAR(p.value[1], 0.001, 1e-8);
  EXPECT_EQ(p.value[2], 0.0f);
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  const AdamConfig cfg{0.002, 0.5, 0.999, 1e-8};
  Parameter p(Tensor({4}, 0.0f, true));
  const float g[4] = {5.0f, -0.3f, 1e-3f, -40.0f};
  for (int t = 0; t < 30; ++t) {
    const std::vector<float> before(p.value.data().begin(), p.value.data().end());
    for (std::size_t i = 0; i < 4; ++i) p.value.grad()[i] = g[i];
    adam_step(p, cfg);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(before[i] - p.value[i], std::copysign(cfg.lr, g[i]), 1e-5 * cfg.lr + 1e-7) << "step " << t;
  }
}

// With beta1^2 < beta2, Cauchy-Schwarz bounds |m_hat| / sqrt(v_hat) by
// (1 - beta1) / (1 - beta1^t) * sqrt((1 - beta2^t) / (1 - beta2)) / sqrt(1 - beta1^2 / beta2).
TEST(Adam, StepWithinCauchySchwarzBound) {
  const AdamConfig cfg{0.002, 0.5, 0.999, 1e-8};
  Parameter p(Tensor({64}, 0.0f, true));
  RandomStream rng(3);
  for (int t = 1; t <= 200; ++t) {
    const std::vector<float> before(p.value.data().begin(), p.value.data().end());
    for (auto& g : p.value.grad()) g = static_cast<float>(rng.uniform(-5, 5) * (t % 17 == 0 ? 100 : 1));
    adam_step(p, cfg);
    const double bound = cfg.lr * (1 - cfg.beta1) / (1 - std::pow(cfg.beta1, t)) *
                         std::sqrt((1 - std::pow(cfg.beta2, t)) / (1 - cfg.beta2)) /
                         std::sqrt(1 - cfg.beta1 * cfg.beta1 / cfg.beta2);
    for (std::size_t i = 0; i < before.size(); ++i)
      ASSERT_LE(std::abs(p.value[i] - before[i]), bound * (1 + 1e-5)) << "step " << t;
    if (t == 1)
      for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(std::abs(p.value[i] - before[i]), cfg.lr, 1e-7);
  }
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig cfg = tiny_config();
  cfg.loss_kind = LossKind::smooth_l1_jump;
  cfg.lambda = 12.5;
  cfg.generator.kind = GeneratorKind::encoder_decoder;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.loss_kind, LossKind::smooth_l1_jump);
  EXPECT_EQ(back.generator_kind(), GeneratorKind::encoder_decoder);

  TrainConfig bad = cfg;
  bad.beta1 = 0.9999;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.discriminator.input_channels = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(TrainConfig::from_json("{\"lambda\": \"x\"}"), FormatError);
}

TEST(EvaluateTotals, ClosedForms) {
  const std::vector<std::string> ids{"a", "b", "c"};
  const std::vector<double> truth{100, 250, 40};
  const EvalResult exact = evaluate_totals(ids, truth, truth);
  EXPECT_EQ(exact.mean_signed, 0.0);
  EXPECT_EQ(exact.mean_abs, 0.0);
  const EvalResult zero = evaluate_totals(ids, {0, 0, 0}, truth);
  EXPECT_DOUBLE_EQ(zero.mean_signed, -1.0);
  EXPECT_DOUBLE_EQ(zero.mean_abs, 1.0);
  const std::vector<double> est{110, 200, 50};
  const EvalResult r = evaluate_totals(ids, est, truth);
  EXPECT_NEAR(r.mean_signed, (0.1 - 0.2 + 0.25) / 3, 1e-12);
  EXPECT_NEAR(r.mean_abs, (0.1 + 0.2 + 0.25) / 3, 1e-12);
  std::vector<double> doubled = est;
  for (auto& v : doubled) v *= 2;
  EXPECT_NEAR(1 + evaluate_totals(ids, doubled, truth).mean_signed, 2 * (1 + r.mean_signed), 1e-12);
  EXPECT_THROW(evaluate_totals(ids, {1, 2}, truth), DimensionError);
  EXPECT_THROW(evaluate_totals(ids, est, {100, 0, 40}), UndefinedMetricError);
}

TEST(ConstantBaseline, MinimizesMeanAbsoluteRelativeError) {
  const std::vector<double> totals{100, 200, 400, 130, 95};
  const double best = constant_baseline_total(totals);
  auto cost = [&](double s) {
    double c = 0;
    for (double t : totals) c += std::abs(s / t - 1);
    return c;
  };
  for (double s = 50; s <= 500; s += 0.25) EXPECT_LE(cost(best), cost(s) + 1e-12) << s;
  EXPECT_THROW(constant_baseline_total({}), ContractError);
}

TEST_F(TrainerData, DatasetTensorsMatchPairs) {
  ASSERT_EQ(train_->size(), 6u);
  ASSERT_EQ(test_->size(), 2u);
  EXPECT_EQ(train_->scenes.shape(), (Shape{6, 3, 32, 32}));
  EXPECT_EQ(train_->energies.shape(), (Shape{6, 1, 32, 32}));
  for (float v : train_->energies.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (std::size_t n = 0; n < train_->size(); ++n) {
    const auto e = denormalize_output(train_->energies, train_->e_max, 32, 32, n * 32 * 32);
    EXPECT_NEAR(estimate_energy(e), train_->true_kcal[n], 1e-4 * train_->true_kcal[n]);
  }
}

TEST_F(TrainerData, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig cfg = tiny_config();
  cfg.lr_alpha = 0.0;
  TrainingState s = initial_state(cfg, *digest_, train_->e_max);
  const auto g0 = flatten(s.g.parameters()), d0 = flatten(s.d.parameters());
  const EpochLosses l = train_epoch(s.g, s.d, *train_, cfg, 1);
  EXPECT_EQ(flatten(s.g.parameters()), g0);
  EXPECT_EQ(flatten(s.d.parameters()), d0);
  EXPECT_TRUE(std::isfinite(l.d_loss));
  EXPECT_TRUE(std::isfinite(l.g_loss));
}

TEST_F(TrainerData, OneDiscriminatorAndGeneratorStepPerBatch) {
  TrainConfig cfg = tiny_config();
  TrainingState s = initial_state(cfg, *digest_, train_->e_max);
  const EpochLosses l = train_epoch(s.g, s.d, *train_, cfg, 1);
  EXPECT_EQ(l.d_steps, 3u);
  EXPECT_EQ(l.g_steps, 3u);
  for (const auto& p : s.g.parameters()) EXPECT_EQ(p.param->step_count, 3u) << p.name;
  for (const auto& p : s.d.parameters()) EXPECT_EQ(p.param->step_count, 3u) << p.name;
  cfg.batch_size = 4;
  const EpochLosses ragged = train_epoch(s.g, s.d, *train_, cfg, 2);
  EXPECT_EQ(ragged.d_steps, 2u);
  EXPECT_EQ(ragged.g_steps, 2u);
}

TEST_F(TrainerData, EpochIsDeterministicForFixedSeed) {
  const TrainConfig cfg = tiny_config();
  TrainingState a = initial_state(cfg, *digest_, train_->e_max);
  TrainingState b = initial_state(cfg, *digest_, train_->e_max);
  const EpochLosses la = train_epoch(a.g, a.d, *train_, cfg, 1);
  const EpochLosses lb = train_epoch(b.g, b.d, *train_, cfg, 1);
  EXPECT_EQ(la.d_loss, lb.d_loss);
  EXPECT_EQ(la.g_loss, lb.g_loss);
  EXPECT_EQ(flatten(a.g.parameters()), flatten(b.g.parameters()));
  TrainConfig other = cfg;
  other.seed = 6;
  TrainingState c = initial_state(other, *digest_, train_->e_max);
  train_epoch(c.g, c.d, *train_, other, 1);
  EXPECT_NE(flatten(c.g.parameters()), flatten(a.g.parameters()));
}

TEST_F(TrainerData, EvaluateMatchesPredictions) {
  TrainingState s = initial_state(tiny_config(), *digest_, train_->e_max);
  RandomStream n1 = eval_noise_stream(5, 1), n2 = eval_noise_stream(5, 1);
  const auto preds = predict(s.g, *test_, true, n1, 2);
  const EvalResult r = evaluate(s.g, *test_, true, n2, 2);
  ASSERT_EQ(preds.size(), test_->size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(r.samples[i].id, test_->ids[i]);
    EXPECT_EQ(r.samples[i].est_kcal, estimate_energy(preds[i]));
    for (double v : preds[i].data()) EXPECT_GE(v, 0.0);
  }
  // Batch size only changes float summation order.
  RandomStream n3 = eval_noise_stream(5, 1);
  const auto single = predict(s.g, *test_, true, n3, 1);
  for (std::size_t i = 0; i < preds.size(); ++i)
    EXPECT_NEAR(estimate_energy(single[i]), estimate_energy(preds[i]), 1e-5 * estimate_energy(preds[i]));
}

TEST_F(TrainerData, FitWithZeroEpochsWritesInitialCheckpoint) {
  test::TempDir out("fit_zero");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  const TrainingState s = fit(cfg, *train_, *test_, {out.path(), *digest_, std::nullopt});
  EXPECT_TRUE(s.history.empty());
  EXPECT_EQ(s.epoch, 0);
  EXPECT_TRUE(fs::exists(out.path() / "ckpt_e0000.kckp"));
  EXPECT_TRUE(fs::exists(out.path() / "latest.kckp"));
  EXPECT_EQ(parse_lines(out.path() / "metrics.csv"), 1u);
}

TEST_F(TrainerData, FitRecordsMetricsAndCheckpoints) {
  test::TempDir out("fit_run");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.checkpoint_interval = 2;
  const TrainingState s = fit(cfg, *train_, *test_, {out.path(), *digest_, std::nullopt});
  ASSERT_EQ(s.history.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(s.history[static_cast<std::size_t>(e)].epoch, e + 1);
    EXPECT_EQ(s.history[static_cast<std::size_t>(e)].wall_seconds, 0.0);
  }
  for (const char* name : {"ckpt_e0000.kckp", "ckpt_e0002.kckp", "ckpt_e0003.kckp", "latest.kckp"})
    EXPECT_TRUE(fs::exists(out.path() / name)) << name;
  EXPECT_FALSE(fs::exists(out.path() / "ckpt_e0001.kckp"));
  EXPECT_EQ(parse_lines(out.path() / "metrics.csv"), 4u);

  // Metrics recorded for an epoch agree with a fresh evaluation of that checkpoint.
  TrainingState at3 = from_checkpoint(Checkpoint::load(out.path() / "ckpt_e0003.kckp"));
  RandomStream noise = eval_noise_stream(cfg.seed, 3);
  const EvalResult r = evaluate(at3.g, *test_, cfg.eval_noise, noise, cfg.batch_size);
  EXPECT_EQ(r.mean_signed, s.history.back().mean_signed_error);
  EXPECT_EQ(r.mean_abs, s.history.back().mean_abs_error);
}

TEST_F(TrainerData, SameSeedGivesIdenticalMetricsFile) {
  test::TempDir a("fit_a"), b("fit_b");
  const TrainConfig cfg = tiny_config();
  fit(cfg, *train_, *test_, {a.path(), *digest_, std::nullopt});
  fit(cfg, *train_, *test_, {b.path(), *digest_, std::nullopt});
  EXPECT_EQ(read_file_bytes(a.path() / "metrics.csv"), read_file_bytes(b.path() / "metrics.csv"));
  EXPECT_EQ(read_file_bytes(a.path() / "latest.kckp"), read_file_bytes(b.path() / "latest.kckp"));
}

TEST_F(TrainerData, ResumeEqualsUninterruptedRun) {
  test::TempDir full("fit_full"), part("fit_part");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  const TrainingState whole = fit(cfg, *train_, *test_, {full.path(), *digest_, std::nullopt});
  TrainConfig first = cfg;
  first.epochs = 1;
  fit(first, *train_, *test_, {part.path(), *digest_, std::nullopt});
  const TrainingState resumed = fit(cfg, *train_, *test_, {part.path(), *digest_, part.path() / "latest.kckp"});
  EXPECT_EQ(resumed.history, whole.history);
  EXPECT_EQ(read_file_bytes(full.path() / "metrics.csv"), read_file_bytes(part.path() / "metrics.csv"));
  EXPECT_EQ(read_file_bytes(full.path() / "latest.kckp"), read_file_bytes(part.path() / "latest.kckp"));
}

TEST_F(TrainerData, ResumeRejectsMismatches) {
  test::TempDir out("fit_mismatch");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  fit(cfg, *train_, *test_, {out.path(), *digest_, std::nullopt});
  const fs::path latest = out.path() / "latest.kckp";
  EXPECT_THROW(fit(cfg, *train_, *test_, {out.path(), "0000", latest}), CompatibilityError);
  TrainConfig other = cfg;
  other.lambda = 10;
  EXPECT_THROW(fit(other, *train_, *test_, {out.path(), *digest_, latest}), CompatibilityError);
  other = cfg;
  other.generator.kind = GeneratorKind::encoder_decoder;
  EXPECT_THROW(fit(other, *train_, *test_, {out.path(), *digest_, latest}), CompatibilityError);
  // Run controls may change between sessions.
  other = cfg;
  other.epochs = 2;
  other.checkpoint_interval = 5;
  EXPECT_NO_THROW(fit(other, *train_, *test_, {out.path(), *digest_, latest}));
}

TEST_F(TrainerData, NonFiniteLossAbortsAndKeepsCheckpoint) {
  test::TempDir out("fit_nan");
  TensorDataset poisoned = *train_;
  poisoned.scenes = train_->scenes.clone();
  for (std::size_t i = 0; i < 3 * 32 * 32; ++i) poisoned.scenes[i] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg = tiny_config();
  try {
    fit(cfg, poisoned, *test_, {out.path(), *digest_, std::nullopt});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_GE(e.batch(), 0);
    EXPECT_LT(e.batch(), 3);
  }
  const TrainingState kept = from_checkpoint(Checkpoint::load(out.path() / "latest.kckp"));
  EXPECT_EQ(kept.epoch, 0);
}

TEST_F(TrainerData, CheckpointRoundTripRestoresState) {
  TrainConfig cfg = tiny_config();
  TrainingState s = initial_state(cfg, *digest_, train_->e_max);
  train_epoch(s.g, s.d, *train_, cfg, 1);
  s.epoch = 1;
  s.history.push_back({1, 0.5, 2.0, 0.01, -0.2, 0.3, 0.0});
  const Checkpoint ck = to_checkpoint(s);
  TrainingState back = from_checkpoint(Checkpoint::decode(ck.encode()));
  EXPECT_EQ(back.epoch, 1);
  EXPECT_EQ(back.history, s.history);
  EXPECT_EQ(back.manifest_digest, *digest_);
  EXPECT_EQ(back.e_max, s.e_max);
  EXPECT_EQ(flatten(back.g.parameters()), flatten(s.g.parameters()));
  EXPECT_EQ(flatten(back.d.parameters()), flatten(s.d.parameters()));
  const auto sp = s.g.parameters(), bp = back.g.parameters();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    EXPECT_EQ(bp[i].param->adam_m, sp[i].param->adam_m);
    EXPECT_EQ(bp[i].param->adam_v, sp[i].param->adam_v);
    EXPECT_EQ(bp[i].param->step_count, sp[i].param->step_count);
  }
  const auto sb = s.g.buffers(), bb = back.g.buffers();
  for (std::size_t i = 0; i < sb.size(); ++i) EXPECT_EQ(*bb[i].values, *sb[i].values) << sb[i].name;
  EXPECT_EQ(to_checkpoint(back).encode(), ck.encode());
}

TEST(Checkpoint, RejectsCorruptEncodings) {
  Checkpoint ck;
  ck.tensors.push_back({"w", {2, 2}, {1, 2, 3, 4}});
  ck.config_json = "{\"a\":1}";
  auto bytes = ck.encode();
  const Checkpoint back = Checkpoint::decode(bytes);
  ASSERT_NE(back.find("w"), nullptr);
  EXPECT_EQ(back.find("w")->values, ck.tensors[0].values);
  EXPECT_EQ(back.config_json, ck.config_json);
  EXPECT_EQ(back.find("missing"), nullptr);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(Checkpoint::decode(trailing), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(Checkpoint::decode(truncated), FormatError);
  auto magic = bytes;
  magic[0] ^= 0xFF;
  EXPECT_THROW(Checkpoint::decode(magic), FormatError);
}

}  // namespace
}  // namespace kcal
