#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcal/adam.hpp"
#include "kcal/checkpoint.hpp"
#include "kcal/dataset.hpp"
#include "kcal/losses.hpp"
#include "kcal/models.hpp"

namespace kcal {

struct TrainConfig {
  double lr_alpha = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 100.0;
  std::size_t batch_size = 4;
  int epochs = 100;
  LossKind loss_kind = LossKind::l1;
  std::uint64_t seed = 7;
  /// Keep dropout (the noise input) on while evaluating.
  bool eval_noise = true;
  /// Use log(1 - D(G)) instead of -log D(G) for the generator.
  bool saturating_adversarial = false;
  /// Save a checkpoint every n epochs (0: only the final one).
  int checkpoint_interval = 10;
  /// Fill the wall_seconds column; off keeps metrics files reproducible.
  bool record_wall_time = false;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  GeneratorKind generator_kind() const noexcept { return generator.kind; }
  AdamConfig adam() const { return {lr_alpha, beta1, beta2, adam_eps}; }
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochMetrics {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double g_conditional = 0.0;
  double mean_signed_error = 0.0;
  double mean_abs_error = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

/// Pairs as normalized tensors: scenes 2 * rgb - 1, energies 2 * w / e_max - 1.
struct TensorDataset {
  std::vector<std::string> ids;
  Tensor scenes;    // (N, 3, H, W)
  Tensor energies;  // (N, 1, H, W)
  std::vector<double> true_kcal;
  std::size_t width = 0;
  std::size_t height = 0;
  double e_max = 1.0;

  static TensorDataset from_pairs(const std::vector<LoadedPair>& pairs, double e_max);
  std::size_t size() const noexcept { return ids.size(); }
  Tensor gather_scenes(const std::vector<std::size_t>& index) const;
  Tensor gather_energies(const std::vector<std::size_t>& index) const;
};

struct EpochLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double g_conditional = 0.0;
  std::size_t d_steps = 0;
  std::size_t g_steps = 0;
};

/// One pass over `train` in a seeded batch order: per batch one D step on the
/// discriminator loss (fake detached), then one G step on the generator loss.
/// Returns batch-mean losses. Throws NonFiniteError on a NaN or infinite loss.
EpochLosses train_epoch(Generator& g, Discriminator& d, const TensorDataset& train, const TrainConfig& cfg,
                        int epoch);

struct SampleEstimate {
  std::string id;
  double true_kcal = 0.0;
  double est_kcal = 0.0;
  double signed_error = 0.0;
};

struct EvalResult {
  double mean_signed = 0.0;
  double mean_abs = 0.0;
  std::vector<SampleEstimate> samples;
};

/// Scores per-sample total estimates against the true totals.
EvalResult evaluate_totals(const std::vector<std::string>& ids, const std::vector<double>& estimates,
                           const std::vector<double>& truths);

/// G's energy images for every sample, eval-mode normalization.
std::vector<EnergyImage> predict(Generator& g, const TensorDataset& data, bool noise_active, RandomStream& noise,
                                 std::size_t batch_size = 16);

/// Runs G (eval-mode normalization) on every sample, denormalizes with
/// e_max and scores the pixel sums.
EvalResult evaluate(Generator& g, const TensorDataset& test, bool noise_active, RandomStream& noise,
                    std::size_t batch_size = 16);

/// Dropout stream used when scoring after `epoch`.
RandomStream eval_noise_stream(std::uint64_t seed, int epoch);

/// The single total S minimizing mean |S / T_i - 1| over the given totals.
/// A constant energy map with this sum is the best constant predictor.
double constant_baseline_total(const std::vector<double>& train_totals);

struct TrainingState {
  TrainConfig config;
  Generator g;
  Discriminator d;
  int epoch = 0;
  std::vector<EpochMetrics> history;
  std::string manifest_digest;
  double e_max = 0.0;
};

TrainingState initial_state(const TrainConfig& cfg, std::string manifest_digest, double e_max);

Checkpoint to_checkpoint(TrainingState& state);
/// Throws FormatError when tensors are missing or mis-shaped.
TrainingState from_checkpoint(const Checkpoint& ck);

std::string metrics_csv(const std::vector<EpochMetrics>& history);

struct FitOptions {
  std::filesystem::path out_dir;
  std::string manifest_digest;
  std::optional<std::filesystem::path> resume;
};

/// Trains until cfg.epochs, evaluating on `test` after each epoch. Writes
/// out_dir/metrics.csv after each epoch and ckpt_eNNNN.kckp (plus
/// latest.kckp) at epoch 0, every checkpoint_interval epochs and at the end.
/// Resuming requires a matching manifest digest; the resumed run continues
/// from the stored epoch with the stored history.
TrainingState fit(const TrainConfig& cfg, const TensorDataset& train, const TensorDataset& test,
                  const FitOptions& options);

}  // namespace kcal
