#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kcal {

struct ManifestAnnotation {
  std::string label;
  double energy_kcal = 0.0;
  std::string mask_path;
};

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" or "test"
  std::uint64_t base_index = 0;
  std::string augmentation = "none";
  std::string scene_path;   // relative to the manifest directory
  std::string energy_path;
  std::vector<ManifestAnnotation> annotations;
  std::array<double, 9> homography{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

/// Dataset ledger written next to the pair files as manifest.json.
struct DatasetManifest {
  int format_version = 1;
  std::string rng = "splitmix64-counter";
  std::string spec_json = "{}";  // JSON object echoing the generating configuration
  double e_max = 0.0;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory the relative paths resolve against; not serialized

  std::size_t count(const std::string& split) const;
  std::vector<const ManifestEntry*> split(const std::string& name) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }

  std::string to_json() const;
  /// Throws FormatError on malformed JSON or missing fields.
  static DatasetManifest from_json(const std::string& text, std::filesystem::path root = {});

  /// Reads <dir>/manifest.json or the given file.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& file) const;
};

/// Checks that every referenced file exists and decodes, and that e_max
/// covers every listed energy image. Throws FormatError / IoError.
void validate_manifest(const DatasetManifest& manifest);

/// Lowercase hex SHA-256 over the manifest text and every referenced file
/// (each prefixed by its relative path), in listing order.
std::string manifest_digest(const DatasetManifest& manifest);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace kcal
