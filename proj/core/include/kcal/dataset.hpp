#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcal/augment.hpp"
#include "kcal/manifest.hpp"
#include "kcal/scene.hpp"

namespace kcal {

/// Generates n_base scenes and writes them with their augmentations under
/// out_dir (pairs/*.edm plus manifest.json).
///
/// Bases with index < round(n_base * train_frac) form the train split; the
/// plan is applied to train bases only, so every test pair is an untouched
/// scene. Crops are zero-padded back to the scene extent. An augmentation that
/// would leave no food is skipped. e_max is max(1.05 * largest train pixel,
/// largest pixel overall).
DatasetManifest build_dataset(const SceneSpec& spec, std::size_t n_base, const std::vector<AugmentationOp>& plan,
                              double train_frac, double test_frac, const std::filesystem::path& out_dir);

/// Writes one pair and its masks under root/pairs and returns its entry.
ManifestEntry write_pair(const PairedSample& sample, const std::filesystem::path& root, const std::string& split,
                         std::uint64_t base_index, const std::string& augmentation);

struct LoadedPair {
  std::string id;
  Raster<float> scene;   // RGB in [0, 1]
  Raster<float> energy;  // kcal per pixel
};

std::vector<LoadedPair> load_split(const DatasetManifest& manifest, const std::string& split);

/// Unpaired input item: <dir>/scene.edm, mask_<k>.edm and foods.json
/// ({"foods": [{"label", "energy_kcal", "mask"}], optional "homography"}).
void export_raw_scene(const PairedSample& sample, const std::filesystem::path& dir, bool include_homography = false);

struct BuildPairsReport {
  DatasetManifest manifest;
  std::vector<std::string> built;
  std::vector<std::pair<std::string, std::string>> skipped;  // item, reason
};

/// Runs marker detection, DLT and energy construction for every item
/// directory under input_dir (sorted by name). `homography_override` replaces
/// detection for all items; otherwise an item's own "homography" is used
/// when present. Failed items are reported, not fatal.
BuildPairsReport build_pairs(const std::filesystem::path& input_dir, const std::filesystem::path& out_dir,
                             const MarkerSpec& marker, std::optional<Homography> homography_override = std::nullopt);

}  // namespace kcal
