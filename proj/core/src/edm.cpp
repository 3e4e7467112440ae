#include "kcal/edm.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kcal/error.hpp"

namespace kcal {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'M', '1'};
constexpr std::size_t kHeader = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_edm(const Raster<float>& raster) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeader + 4 * raster.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(raster.width()));
  put_u32(out, static_cast<std::uint32_t>(raster.height()));
  put_u32(out, static_cast<std::uint32_t>(raster.channels()));
  for (float v : raster.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Raster<float> decode_edm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an EDM raster (bad magic or short header)");
  }
  const std::uint64_t w = get_u32(bytes.data() + 4), h = get_u32(bytes.data() + 8), c = get_u32(bytes.data() + 12);
  const std::uint64_t n = w * h * c;
  if (bytes.size() - kHeader != 4 * n) {
    throw FormatError("EDM payload holds " + std::to_string(bytes.size() - kHeader) + " bytes, header declares " +
                      std::to_string(4 * n));
  }
  std::vector<float> values(n);
  for (std::uint64_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(bytes.data() + kHeader + 4 * i));
  return Raster<float>(w, h, c, std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed", path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed", path.string());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_edm(const std::filesystem::path& path, const Raster<float>& raster) {
  write_file_bytes(path, encode_edm(raster));
}

Raster<float> read_edm(const std::filesystem::path& path) {
  try {
    return decode_edm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace kcal
