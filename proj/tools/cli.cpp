#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "kcal/augment.hpp"
#include "kcal/dataset.hpp"
#include "kcal/edm.hpp"
#include "kcal/error.hpp"
#include "kcal/manifest.hpp"
#include "kcal/report.hpp"
#include "kcal/trainer.hpp"

namespace kcal::cli {

namespace fs = std::filesystem;

namespace {

/// Usage problem detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw UsageError("");
      return v;
    }
    const double num = std::stod(text.substr(0, slash), &used);
    if (used != slash) throw UsageError("");
    const std::string den_text = text.substr(slash + 1);
    const double den = std::stod(den_text, &used);
    if (used != den_text.size() || den == 0) throw UsageError("");
    return num / den;
  } catch (const std::exception&) {
    throw UsageError("cannot read fraction '" + text + "'");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 7;
  std::size_t n_base = 350;
  std::size_t width = 64, height = 64;
  std::size_t augment_per_base = 0;
  bool no_augment = false;
  std::string augment;
  std::string train_frac = "6/7";
  int min_foods = 1, max_foods = 4;
  bool occlusion = false;
  std::string out;
  std::string export_raw;
  bool raw_homography = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  c->add_option("--seed", a.seed, "Dataset seed")->capture_default_str();
  c->add_option("--n-base", a.n_base, "Number of base scenes")->capture_default_str();
  c->add_option("--width", a.width, "Scene width in pixels")->capture_default_str();
  c->add_option("--height", a.height, "Scene height in pixels")->capture_default_str();
  c->add_option("--augment-per-base", a.augment_per_base,
                "Augmented copies per training scene from the default plan")
      ->capture_default_str();
  c->add_flag("--no-augment", a.no_augment, "Disable augmentation");
  c->add_option("--augment", a.augment, "Explicit plan, e.g. rotate90,flip_h,random_crop,crop(0,0,48,48)");
  c->add_option("--train-frac", a.train_frac, "Train fraction of the base scenes (decimal or a/b)")
      ->capture_default_str();
  c->add_option("--min-foods", a.min_foods)->capture_default_str();
  c->add_option("--max-foods", a.max_foods)->capture_default_str();
  c->add_flag("--occlusion", a.occlusion, "Let foods overlap");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--export-raw", a.export_raw, "Also write unpaired items (scene, masks, kcal) for build-pairs");
  c->add_flag("--raw-homography", a.raw_homography, "Store the true homography in exported items");
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  SceneSpec spec = SceneSpec::with_extent(a.width, a.height);
  spec.seed = a.seed;
  spec.min_foods = a.min_foods;
  spec.max_foods = a.max_foods;
  spec.allow_occlusion = a.occlusion;
  std::vector<AugmentationOp> plan;
  if (!a.no_augment) {
    if (!a.augment.empty()) {
      for (const auto& s : split_list(a.augment)) plan.push_back(AugmentationOp::parse(s));
    } else {
      plan = default_augment_plan(a.augment_per_base);
    }
  }
  const double train = parse_fraction(a.train_frac);
  if (!a.export_raw.empty()) {
    for (std::size_t i = 0; i < a.n_base; ++i) {
      const PairedSample s = sample_scene(spec, i);
      export_raw_scene(s, fs::path(a.export_raw) / s.id, a.raw_homography);
    }
  }
  const DatasetManifest m = build_dataset(spec, a.n_base, plan, train, 1.0 - train, a.out);
  out << "train pairs: " << m.count("train") << "\n";
  out << "test pairs: " << m.count("test") << "\n";
  out << "e_max: " << fmt(m.e_max) << "\n";
  return ok;
}

// ---- build-pairs -----------------------------------------------------------

struct BuildArgs {
  std::string input;
  std::string out;
  std::string homography;
};

void add_build(CLI::App& app, BuildArgs& a) {
  auto* c = app.add_subcommand("build-pairs", "Build energy images for annotated scenes");
  c->add_option("--input", a.input, "Directory of items (scene.edm, mask_k.edm, foods.json)")->required();
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--homography", a.homography, "'identity' or nine comma-separated values; skips detection");
}

int run_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<Homography> override;
  if (a.homography == "identity") {
    override = Homography();
  } else if (!a.homography.empty()) {
    const auto parts = split_list(a.homography);
    if (parts.size() != 9) throw UsageError("--homography needs 'identity' or nine values");
    std::array<double, 9> v{};
    for (std::size_t i = 0; i < 9; ++i) v[i] = parse_fraction(parts[i]);
    override = Homography::from_row_major(v);
  }
  // The marker layout follows the scene extent; read it from the first item.
  std::size_t w = 64, h = 64;
  for (const auto& d : fs::directory_iterator(a.input)) {
    if (d.is_directory() && fs::exists(d.path() / "scene.edm")) {
      const auto scene = read_edm(d.path() / "scene.edm");
      w = scene.width();
      h = scene.height();
      break;
    }
  }
  const BuildPairsReport r = build_pairs(a.input, a.out, default_marker_spec(w, h), override);
  for (const auto& [item, why] : r.skipped) err << "skipped " << item << ": " << why << "\n";
  out << "built: " << r.built.size() << "\n";
  out << "skipped: " << r.skipped.size() << "\n";
  return r.built.empty() ? io : ok;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string generator = "unet";
  std::string loss = "l1";
  TrainConfig cfg;
  std::string resume;
  bool no_eval_noise = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train the conditional GAN");
  c->add_option("--manifest", a.manifest, "Dataset manifest or its directory")->required();
  c->add_option("--out", a.out, "Run directory (checkpoints, metrics.csv)")->required();
  c->add_option("--generator", a.generator, "unet | encdec")->capture_default_str();
  c->add_option("--loss", a.loss, "l1 | l2 | smoothl1-jump | smoothl1-std")->capture_default_str();
  c->add_option("--lambda", a.cfg.lambda)->capture_default_str();
  c->add_option("--lr", a.cfg.lr_alpha)->capture_default_str();
  c->add_option("--beta1", a.cfg.beta1)->capture_default_str();
  c->add_option("--beta2", a.cfg.beta2)->capture_default_str();
  c->add_option("--batch", a.cfg.batch_size)->capture_default_str();
  c->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  c->add_option("--seed", a.cfg.seed)->capture_default_str();
  c->add_option("--checkpoint-interval", a.cfg.checkpoint_interval, "0 keeps only the final checkpoint")
      ->capture_default_str();
  c->add_option("--depth", a.cfg.generator.depth, "Generator levels")->capture_default_str();
  c->add_option("--base-channels", a.cfg.generator.base_channels)->capture_default_str();
  c->add_option("--dropout", a.cfg.generator.dropout_rate)->capture_default_str();
  c->add_option("--patch-levels", a.cfg.discriminator.patch_levels)->capture_default_str();
  c->add_option("--resume", a.resume, "Continue from a checkpoint");
  c->add_flag("--no-eval-noise", a.no_eval_noise, "Disable dropout noise during evaluation");
  c->add_flag("--saturating", a.cfg.saturating_adversarial, "Use the saturating generator objective");
  c->add_flag("--record-wall-time", a.cfg.record_wall_time, "Fill the wall_seconds column");
}

int run_train(TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = a.cfg;
  cfg.generator.kind = generator_kind_from_string(a.generator);
  cfg.loss_kind = loss_kind_from_string(a.loss);
  cfg.eval_noise = !a.no_eval_noise;
  const DatasetManifest m = DatasetManifest::load(a.manifest);
  const TensorDataset train = TensorDataset::from_pairs(load_split(m, "train"), m.e_max);
  const TensorDataset test = TensorDataset::from_pairs(load_split(m, "test"), m.e_max);
  if (train.size() == 0) throw FormatError("manifest has no training pairs");
  cfg.generator.width = train.width;
  cfg.generator.height = train.height;
  FitOptions opt;
  opt.out_dir = a.out;
  opt.manifest_digest = manifest_digest(m);
  if (!a.resume.empty()) opt.resume = fs::path(a.resume);
  const TrainingState s = fit(cfg, train, test, opt);
  out << "epochs: " << s.epoch << "\n";
  if (!s.history.empty()) {
    out << "final mean_signed_error: " << fmt(s.history.back().mean_signed_error) << "\n";
    out << "final mean_abs_error: " << fmt(s.history.back().mean_abs_error) << "\n";
  }
  return ok;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string out;
  std::string save_predictions;
  bool oracle = false;
  bool no_noise = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint file");
  c->add_option("--manifest", a.manifest, "Dataset manifest or its directory")->required();
  c->add_option("--split", a.split, "train | test")->capture_default_str();
  c->add_option("--out", a.out, "Per-sample CSV path (default: stdout)");
  c->add_option("--save-predictions", a.save_predictions, "Write each predicted energy image as <id>.edm");
  c->add_flag("--oracle", a.oracle, "Use the ground truth as the prediction");
  c->add_flag("--no-noise", a.no_noise, "Disable dropout noise");
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.split != "train" && a.split != "test") throw UsageError("--split must be train or test");
  if (a.checkpoint.empty() && !a.oracle) throw UsageError("eval needs --checkpoint or --oracle");
  const DatasetManifest m = DatasetManifest::load(a.manifest);
  const auto pairs = load_split(m, a.split);
  if (pairs.empty()) throw FormatError("split '" + a.split + "' is empty");

  std::vector<Raster<float>> predictions;
  if (a.oracle) {
    for (const auto& p : pairs) predictions.push_back(p.energy);
  } else {
    TrainingState s = from_checkpoint(Checkpoint::load(a.checkpoint));
    if (s.manifest_digest != manifest_digest(m)) {
      throw CompatibilityError("checkpoint was trained on a different dataset (manifest digest mismatch)");
    }
    const TensorDataset ds = TensorDataset::from_pairs(pairs, s.e_max);
    if (ds.width != s.config.generator.width || ds.height != s.config.generator.height) {
      throw CompatibilityError("dataset extent differs from the checkpoint's generator");
    }
    RandomStream noise = eval_noise_stream(s.config.seed, s.epoch);
    for (auto& e : predict(s.g, ds, s.config.eval_noise && !a.no_noise, noise, s.config.batch_size))
      predictions.push_back(raster_cast<float>(e));
  }

  std::vector<std::string> ids;
  std::vector<double> est, truth;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ids.push_back(pairs[i].id);
    est.push_back(raster_sum(predictions[i]));
    truth.push_back(raster_sum(pairs[i].energy));
  }
  const EvalResult r = evaluate_totals(ids, est, truth);

  if (!a.save_predictions.empty()) {
    std::error_code ec;
    fs::create_directories(a.save_predictions, ec);
    if (ec) throw IoError("cannot create directory", a.save_predictions);
    for (std::size_t i = 0; i < pairs.size(); ++i)
      write_edm(fs::path(a.save_predictions) / (pairs[i].id + ".edm"), predictions[i]);
  }
  std::string csv = "id,true_kcal,est_kcal,signed_error\n";
  for (const auto& s : r.samples) csv += s.id + "," + fmt(s.true_kcal) + "," + fmt(s.est_kcal) + "," + fmt(s.signed_error) + "\n";
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file_text(a.out, csv);
  }
  out << "samples: " << r.samples.size() << "\n";
  out << "mean_signed_error: " << fmt(r.mean_signed) << "\n";
  out << "mean_abs_error: " << fmt(r.mean_abs) << "\n";
  return ok;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> metrics;
  std::string out;
  std::string manifest;
  std::string predictions;
  std::size_t samples = 4;
};

void add_report(CLI::App& app, ReportArgs& a) {
  auto* c = app.add_subcommand("report", "Render error curves and energy heatmaps");
  c->add_option("--metrics", a.metrics, "One or more metrics CSV files")->required()->expected(1, -1);
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--manifest", a.manifest, "Dataset manifest for heatmap triptychs");
  c->add_option("--predictions", a.predictions, "Directory of <id>.edm predictions (from eval --save-predictions)");
  c->add_option("--samples", a.samples, "Number of triptychs")->capture_default_str();
}

int run_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<CurveSeries> series;
  std::map<std::string, int> stem_count;
  for (const auto& f : a.metrics) ++stem_count[fs::path(f).stem().string()];
  for (const auto& f : a.metrics) {
    const fs::path p(f);
    const auto bytes = read_file_bytes(p);
    CurveSeries s;
    s.name = p.stem().string();
    if (stem_count[s.name] > 1) s.name = p.parent_path().filename().string() + "/" + s.name;
    try {
      s.rows = parse_metrics_csv(std::string(bytes.begin(), bytes.end()));
    } catch (const FormatError& e) {
      err << "kcal: " << f << ": " << e.what() << "\n";
      return usage;
    }
    series.push_back(std::move(s));
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create directory", a.out);
  write_png(fs::path(a.out) / "error_curves.png", render_error_curves(series));
  out << "wrote " << (fs::path(a.out) / "error_curves.png").string() << "\n";

  if (!a.manifest.empty() && !a.predictions.empty()) {
    const DatasetManifest m = DatasetManifest::load(a.manifest);
    std::size_t written = 0;
    for (const auto& e : m.entries) {
      if (written >= a.samples) break;
      const fs::path pred = fs::path(a.predictions) / (e.id + ".edm");
      if (!fs::exists(pred)) continue;
      const RgbImage img =
          render_triptych(read_edm(m.resolve(e.scene_path)), read_edm(m.resolve(e.energy_path)), read_edm(pred), m.e_max);
      const fs::path file = fs::path(a.out) / ("triptych_" + e.id + ".png");
      write_png(file, img);
      out << "wrote " << file.string() << "\n";
      ++written;
    }
  }
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"kcal: energy distribution images and cGAN energy estimation", "kcal"};
  app.require_subcommand(1);
  SynthArgs synth;
  BuildArgs build;
  TrainArgs train;
  EvalArgs eval;
  ReportArgs report;
  add_synth(app, synth);
  add_build(app, build);
  add_train(app, train);
  add_eval(app, eval);
  add_report(app, report);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth, out);
    if (app.got_subcommand("build-pairs")) return run_build(build, out, err);
    if (app.got_subcommand("train")) return run_train(train, out);
    if (app.got_subcommand("eval")) return run_eval(eval, out);
    if (app.got_subcommand("report")) return run_report(report, out, err);
  } catch (const UsageError& e) {
    err << "kcal: " << e.what() << "\n";
    return usage;
  } catch (const ConfigError& e) {
    err << "kcal: " << e.what() << "\n";
    return usage;
  } catch (const NonFiniteError& e) {
    err << "kcal: training aborted: " << e.what() << "\n";
    return training_abort;
  } catch (const CompatibilityError& e) {
    err << "kcal: " << e.what() << "\n";
    return compatibility;
  } catch (const Error& e) {
    err << "kcal: " << e.what() << "\n";
    return io;
  } catch (const fs::filesystem_error& e) {
    err << "kcal: " << e.what() << "\n";
    return io;
  }
  return usage;
}

}  // namespace kcal::cli
