#include "kcal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "kcal/edm.hpp"
#include "kcal/error.hpp"

namespace kcal {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagInitG = 0x61, kTagInitD = 0xD1, kTagOrder = 0x0D, kTagNoise = 0x2E, kTagEval = 0xE7;

RandomStream epoch_stream(std::uint64_t seed, std::uint64_t tag, int epoch) {
  return RandomStream(seed, {tag, static_cast<std::uint64_t>(epoch)});
}

std::vector<std::size_t> permutation(std::size_t n, RandomStream& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

Tensor gather(const Tensor& all, const std::vector<std::size_t>& index) {
  Shape shape = all.shape();
  const std::size_t per = all.size() / shape[0];
  shape[0] = index.size();
  Tensor out(shape);
  auto dst = out.data();
  const auto src = all.data();
  for (std::size_t b = 0; b < index.size(); ++b)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(index[b] * per), per,
                dst.begin() + static_cast<std::ptrdiff_t>(b * per));
  return out;
}

json generator_json(const GeneratorConfig& g) {
  return {{"kind", to_string(g.kind)},       {"depth", g.depth},
          {"base_channels", g.base_channels}, {"dropout_rate", g.dropout_rate},
          {"dropout_levels", g.dropout_levels}, {"input_channels", g.input_channels},
          {"output_channels", g.output_channels}, {"width", g.width},
          {"height", g.height}};
}

GeneratorConfig generator_from(const json& j) {
  GeneratorConfig g;
  g.kind = generator_kind_from_string(j.at("kind").get<std::string>());
  g.depth = j.at("depth").get<int>();
  g.base_channels = j.at("base_channels").get<std::size_t>();
  g.dropout_rate = j.at("dropout_rate").get<double>();
  g.dropout_levels = j.at("dropout_levels").get<int>();
  g.input_channels = j.at("input_channels").get<std::size_t>();
  g.output_channels = j.at("output_channels").get<std::size_t>();
  g.width = j.at("width").get<std::size_t>();
  g.height = j.at("height").get<std::size_t>();
  return g;
}

json metrics_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"d_loss", m.d_loss},
          {"g_loss", m.g_loss},
          {"g_conditional", m.g_conditional},
          {"mean_signed_error", m.mean_signed_error},
          {"mean_abs_error", m.mean_abs_error},
          {"wall_seconds", m.wall_seconds}};
}

EpochMetrics metrics_from(const json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.d_loss = j.at("d_loss").get<double>();
  m.g_loss = j.at("g_loss").get<double>();
  m.g_conditional = j.at("g_conditional").get<double>();
  m.mean_signed_error = j.at("mean_signed_error").get<double>();
  m.mean_abs_error = j.at("mean_abs_error").get<double>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  return m;
}

void put_params(Checkpoint& ck, const std::vector<NamedParameter>& params, json& steps) {
  for (const auto& p : params) {
    const Parameter& q = *p.param;
    const std::vector<float> values(q.value.data().begin(), q.value.data().end());
    ck.tensors.push_back({p.name, q.value.shape(), values});
    ck.tensors.push_back({p.name + ".adam_m", q.value.shape(), q.adam_m});
    ck.tensors.push_back({p.name + ".adam_v", q.value.shape(), q.adam_v});
    steps[p.name] = q.step_count;
  }
}

void put_buffers(Checkpoint& ck, const std::vector<NamedBuffer>& buffers) {
  for (const auto& b : buffers) ck.tensors.push_back({b.name, Shape{b.values->size()}, *b.values});
}

const CheckpointTensor& need(const Checkpoint& ck, const std::string& name, const Shape& shape) {
  const CheckpointTensor* t = ck.find(name);
  if (t == nullptr) throw FormatError("checkpoint lacks tensor " + name);
  if (t->shape != shape) {
    throw FormatError("checkpoint tensor " + name + " has shape " + to_string(t->shape) + ", model expects " +
                      to_string(shape));
  }
  return *t;
}

void get_params(const Checkpoint& ck, const std::vector<NamedParameter>& params, const json& steps) {
  for (const auto& p : params) {
    Parameter& q = *p.param;
    const auto& v = need(ck, p.name, q.value.shape());
    std::copy(v.values.begin(), v.values.end(), q.value.data().begin());
    q.adam_m = need(ck, p.name + ".adam_m", q.value.shape()).values;
    q.adam_v = need(ck, p.name + ".adam_v", q.value.shape()).values;
    q.step_count = steps.at(p.name).get<std::uint64_t>();
  }
}

void get_buffers(const Checkpoint& ck, const std::vector<NamedBuffer>& buffers) {
  for (const auto& b : buffers) *b.values = need(ck, b.name, Shape{b.values->size()}).values;
}

std::string without_run_controls(const TrainConfig& cfg) {
  json j = json::parse(cfg.to_json());
  j.erase("epochs");
  j.erase("checkpoint_interval");
  j.erase("record_wall_time");
  return j.dump();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_alpha >= 0)) throw ConfigError("learning rate must be nonnegative");
  if (!(0 < beta1 && beta1 < beta2 && beta2 < 1)) throw ConfigError("Adam betas must satisfy 0 < beta1 < beta2 < 1");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(lambda >= 0)) throw ConfigError("lambda must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint interval must be nonnegative");
  generator.validate();
  discriminator.validate();
  if (discriminator.input_channels != generator.input_channels + generator.output_channels) {
    throw ConfigError("discriminator input channels must equal scene plus energy channels");
  }
}

std::string TrainConfig::to_json() const {
  return json{{"lr_alpha", lr_alpha},
              {"beta1", beta1},
              {"beta2", beta2},
              {"adam_eps", adam_eps},
              {"lambda", lambda},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"loss_kind", to_string(loss_kind)},
              {"seed", seed},
              {"eval_noise", eval_noise},
              {"saturating_adversarial", saturating_adversarial},
              {"checkpoint_interval", checkpoint_interval},
              {"record_wall_time", record_wall_time},
              {"generator", generator_json(generator)},
              {"discriminator",
               {{"patch_levels", discriminator.patch_levels},
                {"base_channels", discriminator.base_channels},
                {"input_channels", discriminator.input_channels}}}}
      .dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.lr_alpha = j.at("lr_alpha").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<int>();
    c.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_noise = j.at("eval_noise").get<bool>();
    c.saturating_adversarial = j.at("saturating_adversarial").get<bool>();
    c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
    c.record_wall_time = j.at("record_wall_time").get<bool>();
    c.generator = generator_from(j.at("generator"));
    const json& d = j.at("discriminator");
    c.discriminator.patch_levels = d.at("patch_levels").get<int>();
    c.discriminator.base_channels = d.at("base_channels").get<std::size_t>();
    c.discriminator.input_channels = d.at("input_channels").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

TensorDataset TensorDataset::from_pairs(const std::vector<LoadedPair>& pairs, double e_max) {
  if (!(e_max > 0)) throw ContractError("e_max must be positive");
  TensorDataset ds;
  ds.e_max = e_max;
  if (pairs.empty()) return ds;
  ds.width = pairs[0].scene.width();
  ds.height = pairs[0].scene.height();
  const std::size_t n = pairs.size(), hw = ds.width * ds.height;
  ds.scenes = Tensor({n, 3, ds.height, ds.width});
  ds.energies = Tensor({n, 1, ds.height, ds.width});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pairs[i];
    if (p.scene.width() != ds.width || p.scene.height() != ds.height || !p.scene.same_extent(p.energy)) {
      throw DimensionError("pair " + p.id + " does not share the dataset extent");
    }
    ds.ids.push_back(p.id);
    for (std::size_t px = 0; px < hw; ++px) {
      for (std::size_t ch = 0; ch < 3; ++ch) ds.scenes[(i * 3 + ch) * hw + px] = 2.0f * p.scene.data()[px * 3 + ch] - 1.0f;
      ds.energies[i * hw + px] = normalize_energy(p.energy.data()[px], e_max);
    }
    ds.true_kcal.push_back(raster_sum(p.energy));
  }
  return ds;
}

Tensor TensorDataset::gather_scenes(const std::vector<std::size_t>& index) const { return gather(scenes, index); }
Tensor TensorDataset::gather_energies(const std::vector<std::size_t>& index) const { return gather(energies, index); }

EpochLosses train_epoch(Generator& g, Discriminator& d, const TensorDataset& train, const TrainConfig& cfg,
                        int epoch) {
  EpochLosses out;
  if (train.size() == 0) return out;
  RandomStream order_rng = epoch_stream(cfg.seed, kTagOrder, epoch);
  RandomStream noise = epoch_stream(cfg.seed, kTagNoise, epoch);
  const auto order = permutation(train.size(), order_rng);
  const auto g_params = g.parameters();
  const auto d_params = d.parameters();
  const AdamConfig adam = cfg.adam();
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::vector<std::size_t> index(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + cfg.batch_size)));
    const Tensor x = train.gather_scenes(index);
    const Tensor y = train.gather_energies(index);

    Tape g_tape;
    Tape::Scope g_scope(g_tape);
    const Tensor fake = g.forward(x, ops::NormMode::train, true, noise);

    double d_value = 0;
    {
      Tape d_tape;
      Tape::Scope d_scope(d_tape);
      const Tensor d_loss = discriminator_loss(d, x, y, fake);
      d_value = d_loss.item();
      if (!std::isfinite(d_value)) {
        throw NonFiniteError("non-finite discriminator loss " + std::to_string(d_value) + " at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batches),
                             epoch, static_cast<int>(batches));
      }
      zero_grads(d_params);
      d_tape.backward(d_loss);
      adam_step(d_params, adam);
      ++out.d_steps;
    }

    const GeneratorLoss gl = generator_loss(d, fake, x, y, cfg.loss_kind, cfg.lambda, cfg.saturating_adversarial);
    const double g_value = gl.total.item(), c_value = gl.conditional.item();
    if (!std::isfinite(g_value) || !std::isfinite(c_value)) {
      throw NonFiniteError("non-finite generator loss " + std::to_string(g_value) + " (conditional " +
                               std::to_string(c_value) + ", discriminator " + std::to_string(d_value) +
                               ") at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches),
                           epoch, static_cast<int>(batches));
    }
    zero_grads(g_params);
    g_tape.backward(gl.total);
    adam_step(g_params, adam);
    ++out.g_steps;

    out.d_loss += d_value;
    out.g_loss += g_value;
    out.g_conditional += c_value;
    ++batches;
  }
  out.d_loss /= static_cast<double>(batches);
  out.g_loss /= static_cast<double>(batches);
  out.g_conditional /= static_cast<double>(batches);
  return out;
}

EvalResult evaluate_totals(const std::vector<std::string>& ids, const std::vector<double>& estimates,
                           const std::vector<double>& truths) {
  if (ids.size() != estimates.size() || ids.size() != truths.size()) {
    throw DimensionError("evaluate_totals: ids, estimates and truths differ in length");
  }
  EvalResult r;
  std::vector<double> errors;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!(truths[i] > 0)) throw UndefinedMetricError("sample " + ids[i] + " has zero true energy");
    const double e = (estimates[i] - truths[i]) / truths[i];
    errors.push_back(e);
    r.samples.push_back({ids[i], truths[i], estimates[i], e});
  }
  const ErrorSummary s = summarize_errors(errors);
  r.mean_signed = s.mean_signed;
  r.mean_abs = s.mean_abs;
  return r;
}

std::vector<EnergyImage> predict(Generator& g, const TensorDataset& data, bool noise_active, RandomStream& noise,
                                 std::size_t batch_size) {
  Tape::Pause pause;
  std::vector<EnergyImage> out;
  const std::size_t hw = data.width * data.height;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> index;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) index.push_back(i);
    const Tensor y = g.forward(data.gather_scenes(index), ops::NormMode::eval, noise_active, noise);
    for (std::size_t b = 0; b < index.size(); ++b)
      out.push_back(denormalize_output(y, data.e_max, data.width, data.height, b * hw));
  }
  return out;
}

EvalResult evaluate(Generator& g, const TensorDataset& test, bool noise_active, RandomStream& noise,
                    std::size_t batch_size) {
  if (test.size() == 0) throw ContractError("evaluate needs a nonempty split");
  std::vector<double> estimates;
  for (const auto& e : predict(g, test, noise_active, noise, batch_size)) estimates.push_back(estimate_energy(e));
  return evaluate_totals(test.ids, estimates, test.true_kcal);
}

RandomStream eval_noise_stream(std::uint64_t seed, int epoch) { return epoch_stream(seed, kTagEval, epoch); }

double constant_baseline_total(const std::vector<double>& totals) {
  if (totals.empty()) throw ContractError("constant baseline needs at least one total");
  double best = totals[0], best_cost = std::numeric_limits<double>::infinity();
  for (double s : totals) {
    double cost = 0;
    for (double t : totals) cost += std::abs(s / t - 1.0);
    if (cost < best_cost) {
      best_cost = cost;
      best = s;
    }
  }
  return best;
}

TrainingState initial_state(const TrainConfig& cfg, std::string manifest_digest, double e_max) {
  cfg.validate();
  TrainingState s{cfg,
                  Generator(cfg.generator, mix64(cfg.seed ^ kTagInitG)),
                  Discriminator(cfg.discriminator, mix64(cfg.seed ^ kTagInitD)),
                  0,
                  {},
                  std::move(manifest_digest),
                  e_max};
  return s;
}

Checkpoint to_checkpoint(TrainingState& s) {
  Checkpoint ck;
  json steps = json::object();
  put_params(ck, s.g.parameters(), steps);
  put_params(ck, s.d.parameters(), steps);
  put_buffers(ck, s.g.buffers());
  put_buffers(ck, s.d.buffers());
  json history = json::array();
  for (const auto& m : s.history) history.push_back(metrics_json(m));
  ck.config_json = json{{"train", json::parse(s.config.to_json())},
                        {"epoch", s.epoch},
                        {"rng", {{"algorithm", "splitmix64-counter"}, {"seed", s.config.seed}, {"next_epoch", s.epoch + 1}}},
                        {"manifest_digest", s.manifest_digest},
                        {"e_max", s.e_max},
                        {"adam_steps", steps},
                        {"history", history}}
                       .dump();
  return ck;
}

TrainingState from_checkpoint(const Checkpoint& ck) {
  json j;
  try {
    j = json::parse(ck.config_json);
    TrainingState s = initial_state(TrainConfig::from_json(j.at("train").dump()), j.at("manifest_digest").get<std::string>(),
                                    j.at("e_max").get<double>());
    s.epoch = j.at("epoch").get<int>();
    for (const auto& m : j.at("history")) s.history.push_back(metrics_from(m));
    get_params(ck, s.g.parameters(), j.at("adam_steps"));
    get_params(ck, s.d.parameters(), j.at("adam_steps"));
    get_buffers(ck, s.g.buffers());
    get_buffers(ck, s.d.buffers());
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint config: ") + e.what());
  }
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,d_loss,g_loss,g_conditional,mean_signed_error,mean_abs_error,wall_seconds\n";
  char row[256];
  for (const auto& m : history) {
    std::snprintf(row, sizeof row, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", m.epoch, m.d_loss, m.g_loss, m.g_conditional,
                  m.mean_signed_error, m.mean_abs_error, m.wall_seconds);
    out += row;
  }
  return out;
}

TrainingState fit(const TrainConfig& cfg, const TensorDataset& train, const TensorDataset& test,
                  const FitOptions& options) {
  cfg.validate();
  if (train.size() == 0) throw ContractError("training split is empty");
  if (train.width != cfg.generator.width || train.height != cfg.generator.height) {
    throw CompatibilityError("dataset extent differs from the generator configuration");
  }
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create output directory (" + ec.message() + ")", options.out_dir.string());

  TrainingState s;
  if (options.resume) {
    s = from_checkpoint(Checkpoint::load(*options.resume));
    if (s.manifest_digest != options.manifest_digest) {
      throw CompatibilityError("checkpoint was trained on a different dataset (manifest digest mismatch)");
    }
    if (without_run_controls(s.config) != without_run_controls(cfg)) {
      throw CompatibilityError("checkpoint training configuration differs from the requested one");
    }
    s.config = cfg;
    if (s.history.size() != static_cast<std::size_t>(s.epoch)) throw FormatError("checkpoint history is inconsistent");
  } else {
    s = initial_state(cfg, options.manifest_digest, train.e_max);
  }

  auto save = [&](int epoch) {
    const Checkpoint ck = to_checkpoint(s);
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_e%04d.kckp", epoch);
    ck.save(options.out_dir / name);
    ck.save(options.out_dir / "latest.kckp");
  };
  if (!options.resume) save(0);
  write_file_text(options.out_dir / "metrics.csv", metrics_csv(s.history));

  while (s.epoch < cfg.epochs) {
    const int epoch = s.epoch + 1;
    const auto t0 = std::chrono::steady_clock::now();
    const EpochLosses losses = train_epoch(s.g, s.d, train, cfg, epoch);
    EpochMetrics m;
    m.epoch = epoch;
    m.d_loss = losses.d_loss;
    m.g_loss = losses.g_loss;
    m.g_conditional = losses.g_conditional;
    if (test.size() > 0) {
      RandomStream noise = eval_noise_stream(cfg.seed, epoch);
      const EvalResult r = evaluate(s.g, test, cfg.eval_noise, noise, cfg.batch_size);
      m.mean_signed_error = r.mean_signed;
      m.mean_abs_error = r.mean_abs;
    }
    if (cfg.record_wall_time) m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.history.push_back(m);
    s.epoch = epoch;
    write_file_text(options.out_dir / "metrics.csv", metrics_csv(s.history));
    const bool interval_hit = cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0;
    if (interval_hit || epoch == cfg.epochs) save(epoch);
  }
  return s;
}

}  // namespace kcal
