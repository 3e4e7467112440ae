#include "kcal/manifest.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "kcal/edm.hpp"
#include "kcal/error.hpp"

namespace kcal {

using nlohmann::json;

std::size_t DatasetManifest::count(const std::string& name) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.split == name; }));
}

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(&e);
  return out;
}

std::string DatasetManifest::to_json() const {
  json doc;
  doc["format_version"] = format_version;
  doc["rng"] = rng;
  doc["spec"] = json::parse(spec_json);
  doc["e_max"] = e_max;
  doc["counts"] = {{"train", count("train")}, {"test", count("test")}};
  json list = json::array();
  for (const auto& e : entries) {
    json anns = json::array();
    for (const auto& a : e.annotations)
      anns.push_back({{"label", a.label}, {"energy_kcal", a.energy_kcal}, {"mask_path", a.mask_path}});
    list.push_back({{"id", e.id},
                    {"split", e.split},
                    {"base_index", e.base_index},
                    {"augmentation", e.augmentation},
                    {"scene_path", e.scene_path},
                    {"energy_path", e.energy_path},
                    {"annotations", anns},
                    {"homography", e.homography}});
  }
  doc["entries"] = list;
  return doc.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text, std::filesystem::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  try {
    const json doc = json::parse(text);
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != 1) throw FormatError("unsupported manifest format_version " + std::to_string(m.format_version));
    m.rng = doc.at("rng").get<std::string>();
    m.spec_json = doc.at("spec").dump();
    m.e_max = doc.at("e_max").get<double>();
    for (const auto& je : doc.at("entries")) {
      ManifestEntry e;
      e.id = je.at("id").get<std::string>();
      e.split = je.at("split").get<std::string>();
      if (e.split != "train" && e.split != "test") throw FormatError("entry " + e.id + " has unknown split '" + e.split + "'");
      e.base_index = je.at("base_index").get<std::uint64_t>();
      e.augmentation = je.at("augmentation").get<std::string>();
      e.scene_path = je.at("scene_path").get<std::string>();
      e.energy_path = je.at("energy_path").get<std::string>();
      for (const auto& ja : je.at("annotations"))
        e.annotations.push_back({ja.at("label").get<std::string>(), ja.at("energy_kcal").get<double>(),
                                 ja.at("mask_path").get<std::string>()});
      e.homography = je.at("homography").get<std::array<double, 9>>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  const auto bytes = read_file_bytes(file);
  return from_json(std::string(bytes.begin(), bytes.end()), file.parent_path());
}

void DatasetManifest::save(const std::filesystem::path& file) const { write_file_text(file, to_json()); }

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.id).second) throw FormatError("duplicate entry id " + e.id);
    if (e.split != "train" && e.split != "test") throw FormatError("entry " + e.id + " has unknown split '" + e.split + "'");
    const auto scene = read_edm(manifest.resolve(e.scene_path));
    const auto energy = read_edm(manifest.resolve(e.energy_path));
    if (scene.channels() != 3 || energy.channels() != 1 || !scene.same_extent(energy)) {
      throw FormatError("entry " + e.id + ": scene and energy rasters are not paired");
    }
    for (float v : energy.data()) {
      if (!(v >= 0)) throw FormatError("entry " + e.id + ": negative or non-finite energy");
      if (v > manifest.e_max) throw FormatError("entry " + e.id + ": energy exceeds e_max");
    }
    for (const auto& a : e.annotations) {
      const auto mask = read_edm(manifest.resolve(a.mask_path));
      if (!mask.same_extent(scene)) throw FormatError("entry " + e.id + ": mask extent differs from scene");
    }
  }
}

std::string manifest_digest(const DatasetManifest& manifest) {
  std::vector<std::uint8_t> buf;
  auto append = [&](const std::string& s) { buf.insert(buf.end(), s.begin(), s.end()); buf.push_back(0); };
  auto append_file = [&](const std::string& rel) {
    append(rel);
    const auto bytes = read_file_bytes(manifest.resolve(rel));
    buf.insert(buf.end(), bytes.begin(), bytes.end());
  };
  append(manifest.to_json());
  for (const auto& e : manifest.entries) {
    append_file(e.scene_path);
    append_file(e.energy_path);
    for (const auto& a : e.annotations) append_file(a.mask_path);
  }
  return sha256_hex(buf);
}

}  // namespace kcal
