#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kcal/layers.hpp"

namespace kcal {

enum class GeneratorKind { unet, encoder_decoder };

const char* to_string(GeneratorKind kind);
/// Accepts "unet", "encoder_decoder" and "encdec".
GeneratorKind generator_kind_from_string(const std::string& name);

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::unet;
  int depth = 4;
  std::size_t base_channels = 16;
  double dropout_rate = 0.5;
  /// Dropout follows the innermost `dropout_levels` decoder blocks.
  int dropout_levels = 3;
  std::size_t input_channels = 3;
  std::size_t output_channels = 1;
  std::size_t width = 64;
  std::size_t height = 64;

  /// Channels produced by encoder level i: base * 2^min(i, 3).
  std::size_t level_channels(int level) const;
  void validate() const;
};

/// Encoder of strided 4x4 convolutions (LeakyReLU 0.2, batch norm except on
/// the outermost and innermost levels) mirrored by transposed convolutions
/// (ReLU, batch norm, dropout), ending in tanh. The U-Net variant concatenates
/// encoder level i onto the decoder input of level i; the encoder-decoder
/// variant is otherwise identical.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& cfg, std::uint64_t init_seed);

  /// x: (N, 3, H, W) in [-1, 1]. Returns (N, 1, H, W) in (-1, 1). Dropout
  /// masks are drawn from `noise` when noise_active.
  Tensor forward(const Tensor& x, ops::NormMode mode, bool noise_active, RandomStream& noise);

  std::vector<NamedParameter> parameters();
  std::vector<NamedBuffer> buffers();
  const GeneratorConfig& config() const noexcept { return cfg_; }

 private:
  GeneratorConfig cfg_;
  std::vector<Conv2d> down_;
  std::vector<std::optional<BatchNorm2d>> down_norm_;
  std::vector<ConvTranspose2d> up_;
  std::vector<std::optional<BatchNorm2d>> up_norm_;
};

struct DiscriminatorConfig {
  int patch_levels = 2;
  std::size_t base_channels = 16;
  std::size_t input_channels = 4;

  void validate() const;
};

/// Patch discriminator over scene ++ energy. patch_levels strided 4x4
/// convolutions, one stride-1 4x4 convolution, then a 1-channel stride-1 4x4
/// convolution with sigmoid: a 64x64 input yields a 14x14 score grid at the
/// default depth.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t init_seed);

  Tensor forward(const Tensor& scene, const Tensor& energy, ops::NormMode mode);

  std::vector<NamedParameter> parameters();
  std::vector<NamedBuffer> buffers();
  const DiscriminatorConfig& config() const noexcept { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<std::optional<BatchNorm2d>> norms_;
};

}  // namespace kcal
