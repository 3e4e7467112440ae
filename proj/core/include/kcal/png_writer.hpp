#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kcal {

/// 8-bit RGB canvas, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {255, 255, 255});

  void set(long x, long y, const std::array<std::uint8_t, 3>& c);
  std::array<std::uint8_t, 3> get(std::size_t x, std::size_t y) const;
  void fill_rect(long x, long y, long w, long h, const std::array<std::uint8_t, 3>& c);
  void line(long x0, long y0, long x1, long y1, const std::array<std::uint8_t, 3>& c, int thickness = 1);
  /// 5x7 bitmap text; lowercase renders as uppercase. Returns the pen advance.
  long text(long x, long y, const std::string& s, const std::array<std::uint8_t, 3>& c, int scale = 1);
  static long text_width(const std::string& s, int scale = 1);
};

/// Throws IoError when the file cannot be written.
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace kcal
