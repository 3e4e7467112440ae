#include "kcal/models.hpp"

#include <algorithm>

#include "kcal/error.hpp"

namespace kcal {

namespace {

constexpr double kLeak = 0.2;
constexpr std::uint64_t kDown = 0xD0, kUp = 0x0B, kDisc = 0xD15;

// Each layer owns a stream, so layer shapes never shift another layer's draws.
RandomStream layer_stream(std::uint64_t seed, std::uint64_t part, int level, std::uint64_t role) {
  return RandomStream(seed, {part, static_cast<std::uint64_t>(level), role});
}

}  // namespace

const char* to_string(GeneratorKind kind) {
  return kind == GeneratorKind::unet ? "unet" : "encoder_decoder";
}

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "unet") return GeneratorKind::unet;
  if (name == "encoder_decoder" || name == "encdec") return GeneratorKind::encoder_decoder;
  throw ConfigError("unknown generator kind '" + name + "'");
}

std::size_t GeneratorConfig::level_channels(int level) const {
  return base_channels << std::min(level, 3);
}

void GeneratorConfig::validate() const {
  if (depth < 2) throw ConfigError("generator depth must be at least 2");
  if (base_channels == 0 || input_channels == 0 || output_channels == 0) throw ConfigError("channel counts must be positive");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout rate must lie in [0, 1)");
  const std::size_t step = std::size_t{1} << depth;
  if (width == 0 || height == 0 || width % step != 0 || height % step != 0) {
    throw ConfigError("input extent " + std::to_string(width) + "x" + std::to_string(height) +
                      " is not divisible by 2^" + std::to_string(depth));
  }
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.depth;
  for (int i = 0; i < d; ++i) {
    const std::size_t in = i == 0 ? cfg_.input_channels : cfg_.level_channels(i - 1);
    const bool norm = i > 0 && i < d - 1;
    auto conv_rng = layer_stream(seed, kDown, i, 0);
    down_.emplace_back(in, cfg_.level_channels(i), 4, 2, 1, !norm, conv_rng);
    if (norm) {
      auto bn_rng = layer_stream(seed, kDown, i, 1);
      down_norm_.emplace_back(BatchNorm2d(cfg_.level_channels(i), bn_rng));
    } else {
      down_norm_.emplace_back(std::nullopt);
    }
  }
  for (int i = 0; i < d; ++i) {
    std::size_t in = cfg_.level_channels(i);
    if (i < d - 1 && cfg_.kind == GeneratorKind::unet) in *= 2;
    const std::size_t out = i == 0 ? cfg_.output_channels : cfg_.level_channels(i - 1);
    auto conv_rng = layer_stream(seed, kUp, i, 0);
    up_.emplace_back(in, out, 4, 2, 1, i == 0, conv_rng);
    if (i > 0) {
      auto bn_rng = layer_stream(seed, kUp, i, 1);
      up_norm_.emplace_back(BatchNorm2d(out, bn_rng));
    } else {
      up_norm_.emplace_back(std::nullopt);
    }
  }
}

Tensor Generator::forward(const Tensor& x, ops::NormMode mode, bool noise_active, RandomStream& noise) {
  if (x.rank() != 4 || x.dim(1) != cfg_.input_channels || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
    throw DimensionError("generator expects (N, " + std::to_string(cfg_.input_channels) + ", " +
                         std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) + "), got " +
                         to_string(x.shape()));
  }
  const int d = cfg_.depth;
  std::vector<Tensor> enc(static_cast<std::size_t>(d));
  Tensor h = x;
  for (int i = 0; i < d; ++i) {
    const auto li = static_cast<std::size_t>(i);
    if (i > 0) h = ops::leaky_relu(h, kLeak);
    h = down_[li].forward(h);
    if (down_norm_[li]) h = down_norm_[li]->forward(h, mode);
    enc[li] = h;
  }
  for (int i = d - 1; i >= 0; --i) {
    const auto li = static_cast<std::size_t>(i);
    if (i < d - 1 && cfg_.kind == GeneratorKind::unet) h = ops::concat_channels(h, enc[li]);
    h = up_[li].forward(ops::relu(h));
    if (i == 0) return ops::tanh(h);
    h = up_norm_[li]->forward(h, mode);
    if (i >= d - cfg_.dropout_levels) h = ops::dropout(h, cfg_.dropout_rate, noise, noise_active);
  }
  return h;
}

std::vector<NamedParameter> Generator::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    down_[i].collect("g.down" + std::to_string(i) + ".conv", out);
    if (down_norm_[i]) down_norm_[i]->collect("g.down" + std::to_string(i) + ".norm", out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    up_[i].collect("g.up" + std::to_string(i) + ".conv", out);
    if (up_norm_[i]) up_norm_[i]->collect("g.up" + std::to_string(i) + ".norm", out);
  }
  return out;
}

std::vector<NamedBuffer> Generator::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < down_norm_.size(); ++i)
    if (down_norm_[i]) down_norm_[i]->collect_buffers("g.down" + std::to_string(i) + ".norm", out);
  for (std::size_t i = 0; i < up_norm_.size(); ++i)
    if (up_norm_[i]) up_norm_[i]->collect_buffers("g.up" + std::to_string(i) + ".norm", out);
  return out;
}

void DiscriminatorConfig::validate() const {
  if (patch_levels < 1) throw ConfigError("discriminator needs at least one patch level");
  if (base_channels == 0 || input_channels == 0) throw ConfigError("channel counts must be positive");
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.input_channels;
  const int n = cfg_.patch_levels + 2;
  for (int i = 0; i < n; ++i) {
    const bool last = i == n - 1;
    const std::size_t out = last ? 1 : cfg_.base_channels << std::min(i, 3);
    const int stride = i < cfg_.patch_levels ? 2 : 1;
    const bool norm = i > 0 && !last;
    auto conv_rng = layer_stream(seed, kDisc, i, 0);
    convs_.emplace_back(in, out, 4, stride, 1, !norm, conv_rng);
    if (norm) {
      auto bn_rng = layer_stream(seed, kDisc, i, 1);
      norms_.emplace_back(BatchNorm2d(out, bn_rng));
    } else {
      norms_.emplace_back(std::nullopt);
    }
    in = out;
  }
}

Tensor Discriminator::forward(const Tensor& scene, const Tensor& energy, ops::NormMode mode) {
  Tensor h = ops::concat_channels(scene, energy);
  if (h.dim(1) != cfg_.input_channels) {
    throw DimensionError("discriminator expects " + std::to_string(cfg_.input_channels) + " input channels, got " +
                         std::to_string(h.dim(1)));
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (i + 1 == convs_.size()) return ops::sigmoid(h);
    if (norms_[i]) h = norms_[i]->forward(h, mode);
    h = ops::leaky_relu(h, kLeak);
  }
  return h;
}

std::vector<NamedParameter> Discriminator::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect("d.conv" + std::to_string(i), out);
    if (norms_[i]) norms_[i]->collect("d.norm" + std::to_string(i), out);
  }
  return out;
}

std::vector<NamedBuffer> Discriminator::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < norms_.size(); ++i)
    if (norms_[i]) norms_[i]->collect_buffers("d.norm" + std::to_string(i), out);
  return out;
}

}  // namespace kcal
