#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kcal/raster.hpp"

namespace kcal {

/// EDM raster files: "EDM1", width, height, channels as u32 little-endian,
/// then width * height * channels f32 little-endian values, row-major and
/// channel-interleaved. Nothing may follow the payload.
std::vector<std::uint8_t> encode_edm(const Raster<float>& raster);
Raster<float> decode_edm(const std::vector<std::uint8_t>& bytes);

/// Throws IoError (with the path) on filesystem failures, FormatError on
/// malformed content.
void write_edm(const std::filesystem::path& path, const Raster<float>& raster);
Raster<float> read_edm(const std::filesystem::path& path);

/// Whole-file helpers shared by the binary formats.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

}  // namespace kcal
