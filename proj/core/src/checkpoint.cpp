#include "kcal/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "kcal/edm.hpp"
#include "kcal/error.hpp"

namespace kcal {

namespace {

constexpr char kMagic[4] = {'K', 'C', 'K', 'P'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t byte() {
    need(1);
    return b_[pos_++];
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.values.size()) throw DimensionError("checkpoint tensor " + t.name + " shape/value mismatch");
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(out, static_cast<std::uint32_t>(config_json.size()));
  out.insert(out.end(), config_json.begin(), config_json.end());
  return out;
}

Checkpoint Checkpoint::decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  Reader r(bytes);
  r.str(4);
  const std::uint8_t version = r.byte();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u32());
    const std::size_t n = numel(t.shape);
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.values[k] = std::bit_cast<float>(r.u32());
    ck.tensors.push_back(std::move(t));
  }
  ck.config_json = r.str(r.u32());
  if (!r.done()) throw FormatError("trailing bytes after checkpoint config block");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, encode());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place (" + ec.message() + ")", path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  try {
    return decode(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace kcal
