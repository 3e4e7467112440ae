#include "kcal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "kcal/edm.hpp"
#include "kcal/error.hpp"
#include "kcal/marker.hpp"

namespace kcal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Raster<float> mask_as_float(const Mask& m) { return raster_cast<float>(m); }

Mask mask_from_float(const Raster<float>& r) {
  Mask m(r.width(), r.height(), 1, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = r.data()[i] > 0.5f ? 1 : 0;
  return m;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory (" + ec.message() + ")", dir.string());
}

json spec_echo(const SceneSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes) {
    classes.push_back({{"name", c.name},
                       {"energy_density", c.energy_density},
                       {"base_color", c.base_color},
                       {"shape_family", to_string(c.shape_family)},
                       {"texture_amplitude", c.texture_amplitude}});
  }
  return {{"seed", spec.seed},
          {"width", spec.width},
          {"height", spec.height},
          {"food_count_range", {spec.min_foods, spec.max_foods}},
          {"perspective_jitter", spec.perspective_jitter},
          {"food_radius_range", {spec.min_food_radius, spec.max_food_radius}},
          {"allow_occlusion", spec.allow_occlusion},
          {"marker",
           {{"cols", spec.marker.cols},
            {"rows", spec.marker.rows},
            {"square_size", spec.marker.square_size},
            {"origin", {spec.marker.origin.x(), spec.marker.origin.y()}}}},
          {"classes", classes}};
}

double raster_max(const Raster<float>& r) {
  double m = 0;
  for (float v : r.data()) m = std::max(m, static_cast<double>(v));
  return m;
}

}  // namespace

ManifestEntry write_pair(const PairedSample& sample, const fs::path& root, const std::string& split,
                         std::uint64_t base_index, const std::string& augmentation) {
  ensure_dir(root / "pairs");
  ManifestEntry e;
  e.id = sample.id;
  e.split = split;
  e.base_index = base_index;
  e.augmentation = augmentation;
  e.scene_path = "pairs/" + sample.id + "_scene.edm";
  e.energy_path = "pairs/" + sample.id + "_energy.edm";
  write_edm(root / e.scene_path, sample.scene);
  write_edm(root / e.energy_path, raster_cast<float>(sample.energy));
  for (std::size_t k = 0; k < sample.annotations.size(); ++k) {
    const auto& a = sample.annotations[k];
    ManifestAnnotation ma{a.label, a.energy_kcal, "pairs/" + sample.id + "_mask" + std::to_string(k) + ".edm"};
    write_edm(root / ma.mask_path, mask_as_float(a.mask));
    e.annotations.push_back(std::move(ma));
  }
  e.homography = sample.homography.row_major();
  return e;
}

DatasetManifest build_dataset(const SceneSpec& spec, std::size_t n_base, const std::vector<AugmentationOp>& plan,
                              double train_frac, double test_frac, const fs::path& out_dir) {
  spec.validate();
  if (n_base < 1) throw ConfigError("n_base must be at least 1");
  if (train_frac < 0 || test_frac < 0 || std::abs(train_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n_base) * train_frac));
  ensure_dir(out_dir);

  DatasetManifest manifest;
  manifest.root = out_dir;
  double max_train = 0, max_all = 0;
  for (std::size_t i = 0; i < n_base; ++i) {
    const std::string split = i < n_train ? "train" : "test";
    const PairedSample base = sample_scene(spec, i);
    std::vector<std::pair<PairedSample, std::string>> variants;
    variants.emplace_back(base, "none");
    if (split == "train") {
      for (std::size_t j = 0; j < plan.size(); ++j) {
        RandomStream rng(spec.seed, {0xA116ULL, i, j});
        const AugmentationOp op = plan[j].resolve(spec.width, spec.height, rng);
        PairedSample out;
        try {
          out = augment(base, op);
        } catch (const EmptySampleError&) {
          continue;
        }
        if (op.kind == AugmentationOp::Kind::crop) out = pad_to(out, spec.width, spec.height);
        out.id = base.id + "_a" + std::to_string(j + 1);
        variants.emplace_back(std::move(out), op.describe());
      }
    }
    for (const auto& [sample, aug] : variants) {
      manifest.entries.push_back(write_pair(sample, out_dir, split, i, aug));
      const double m = raster_max(raster_cast<float>(sample.energy));
      max_all = std::max(max_all, m);
      if (split == "train") max_train = std::max(max_train, m);
    }
  }
  manifest.e_max = std::max(1.05 * max_train, max_all);

  json echo = spec_echo(spec);
  echo["n_base"] = n_base;
  echo["split"] = {train_frac, test_frac};
  json ops = json::array();
  for (const auto& op : plan) ops.push_back(op.describe());
  echo["augment_plan"] = ops;
  manifest.spec_json = echo.dump();
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

std::vector<LoadedPair> load_split(const DatasetManifest& manifest, const std::string& split) {
  std::vector<LoadedPair> out;
  for (const ManifestEntry* e : manifest.split(split)) {
    LoadedPair p{e->id, read_edm(manifest.resolve(e->scene_path)), read_edm(manifest.resolve(e->energy_path))};
    if (p.scene.channels() != 3 || p.energy.channels() != 1 || !p.scene.same_extent(p.energy)) {
      throw FormatError("entry " + e->id + ": scene and energy rasters are not paired");
    }
    out.push_back(std::move(p));
  }
  return out;
}

void export_raw_scene(const PairedSample& sample, const fs::path& dir, bool include_homography) {
  ensure_dir(dir);
  write_edm(dir / "scene.edm", sample.scene);
  json foods = json::array();
  for (std::size_t k = 0; k < sample.annotations.size(); ++k) {
    const std::string name = "mask_" + std::to_string(k) + ".edm";
    write_edm(dir / name, mask_as_float(sample.annotations[k].mask));
    foods.push_back({{"label", sample.annotations[k].label},
                     {"energy_kcal", sample.annotations[k].energy_kcal},
                     {"mask", name}});
  }
  json doc = {{"foods", foods}};
  if (include_homography) doc["homography"] = sample.homography.row_major();
  write_file_text(dir / "foods.json", doc.dump(2) + "\n");
}

BuildPairsReport build_pairs(const fs::path& input_dir, const fs::path& out_dir, const MarkerSpec& marker,
                             std::optional<Homography> homography_override) {
  if (!fs::is_directory(input_dir)) throw IoError("input is not a directory", input_dir.string());
  std::vector<fs::path> items;
  for (const auto& d : fs::directory_iterator(input_dir))
    if (d.is_directory()) items.push_back(d.path());
  std::sort(items.begin(), items.end());
  ensure_dir(out_dir);

  BuildPairsReport report;
  report.manifest.root = out_dir;
  double max_all = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string name = items[i].filename().string();
    try {
      const auto side = read_file_bytes(items[i] / "foods.json");
      json doc;
      try {
        doc = json::parse(side.begin(), side.end());
      } catch (const json::exception& e) {
        throw FormatError(std::string("foods.json: ") + e.what());
      }
      PairedSample sample;
      sample.id = name;
      sample.scene = read_edm(items[i] / "scene.edm");
      if (sample.scene.channels() != 3) throw FormatError("scene.edm must have 3 channels");
      for (const auto& f : doc.at("foods")) {
        FoodAnnotation a{f.at("label").get<std::string>(),
                         mask_from_float(read_edm(items[i] / f.at("mask").get<std::string>())),
                         f.at("energy_kcal").get<double>()};
        if (!a.mask.same_extent(sample.scene)) throw FormatError("mask extent differs from scene");
        a.validate();
        sample.annotations.push_back(std::move(a));
      }
      if (sample.annotations.empty()) throw FormatError("no foods listed");
      if (homography_override) {
        sample.homography = *homography_override;
      } else if (doc.contains("homography")) {
        sample.homography = Homography::from_row_major(doc.at("homography").get<std::array<double, 9>>());
      } else {
        const MarkerDetection det = detect_marker(sample.scene, marker);
        const auto plane = marker.inner_corners();
        CorrespondenceSet cs;
        for (std::size_t c = 0; c < plane.size(); ++c) cs.push_back({det.corner_points[c], plane[c]});
        sample.homography = estimate_homography_dlt(cs);
      }
      sample.energy = build_energy_image(sample.scene, sample.annotations, sample.homography);
      report.manifest.entries.push_back(write_pair(sample, out_dir, "train", i, "none"));
      max_all = std::max(max_all, raster_max(raster_cast<float>(sample.energy)));
      report.built.push_back(name);
    } catch (const IoError& e) {
      report.skipped.emplace_back(name, e.what());
    } catch (const Error& e) {
      report.skipped.emplace_back(name, e.what());
    } catch (const json::exception& e) {
      report.skipped.emplace_back(name, std::string("foods.json: ") + e.what());
    }
  }
  report.manifest.e_max = 1.05 * max_all;
  report.manifest.spec_json = json{{"source", "build-pairs"}, {"items", items.size()}}.dump();
  report.manifest.save(out_dir / "manifest.json");
  return report;
}

}  // namespace kcal
