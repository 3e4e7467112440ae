#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "kcal/dataset.hpp"
#include "kcal/edm.hpp"
#include "kcal/error.hpp"
#include "kcal/manifest.hpp"
#include "kcal/report.hpp"
#include "test_support.hpp"

namespace kcal {
namespace {

namespace fs = std::filesystem;

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

TEST(Edm, BitExactRoundTrip) {
  const float special[] = {0.0f,
                           -0.0f,
                           1.0f,
                           -3.5f,
                           std::numeric_limits<float>::denorm_min(),
                           std::numeric_limits<float>::min(),
                           std::numeric_limits<float>::max(),
                           -std::numeric_limits<float>::max(),
                           std::numeric_limits<float>::epsilon(),
                           1e-30f,
                           12345.678f,
                           0.1f};
  Raster<float> r(4, 3, 1);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = special[i];
  const Raster<float> back = decode_edm(encode_edm(r));
  ASSERT_EQ(back.width(), 4u);
  ASSERT_EQ(back.height(), 3u);
  ASSERT_EQ(back.channels(), 1u);
  for (std::size_t i = 0; i < r.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data()[i]), std::bit_cast<std::uint32_t>(r.data()[i])) << i;
}

TEST(Edm, MultiChannelFileRoundTrip) {
  test::TempDir dir("edm");
  Raster<float> r(5, 2, 3);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = static_cast<float>(i) * 0.37f - 1.0f;
  write_edm(dir.path() / "x.edm", r);
  const Raster<float> back = read_edm(dir.path() / "x.edm");
  EXPECT_EQ(back.channels(), 3u);
  EXPECT_TRUE(back == r);
  EXPECT_THROW(read_edm(dir.path() / "missing.edm"), IoError);
}

TEST(Edm, RejectsMalformedBytes) {
  const auto good = encode_edm(Raster<float>(3, 3, 1, 2.0f));
  auto trailing = good;
  trailing.push_back(7);
  EXPECT_THROW(decode_edm(trailing), FormatError);
  auto short_payload = good;
  short_payload.pop_back();
  EXPECT_THROW(decode_edm(short_payload), FormatError);
  auto magic = good;
  magic[1] = 'X';
  EXPECT_THROW(decode_edm(magic), FormatError);
  EXPECT_THROW(decode_edm({}), FormatError);
}

TEST(Digest, KnownSha256) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({abc.begin(), abc.end()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Digest, ManifestDigestTracksFileBytes) {
  test::TempDir dir("digest");
  const DatasetManifest m = build_dataset(SceneSpec::with_extent(32, 32), 3, {}, 2.0 / 3, 1.0 / 3, dir.path());
  const std::string d0 = manifest_digest(m);
  EXPECT_EQ(d0.size(), 64u);
  EXPECT_EQ(manifest_digest(DatasetManifest::load(dir.path() / "manifest.json")), d0);

  // Rewriting identical bytes keeps the digest.
  const fs::path energy = m.resolve(m.entries[0].energy_path);
  const auto original = read_file_bytes(energy);
  write_file_bytes(energy, original);
  EXPECT_EQ(manifest_digest(m), d0);

  Raster<float> changed = decode_edm(original);
  changed.data()[0] += 1.0f;
  write_edm(energy, changed);
  EXPECT_NE(manifest_digest(m), d0);
  write_file_bytes(energy, original);
  EXPECT_EQ(manifest_digest(m), d0);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  test::TempDir dir("manifest");
  const DatasetManifest m = build_dataset(SceneSpec::with_extent(32, 32), 3, {}, 2.0 / 3, 1.0 / 3, dir.path());
  const DatasetManifest back = DatasetManifest::from_json(m.to_json(), m.root);
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_NO_THROW(validate_manifest(back));
  DatasetManifest broken = back;
  broken.entries[0].split = "validation";
  EXPECT_THROW(validate_manifest(broken), FormatError);
  broken = back;
  broken.entries[1].id = broken.entries[0].id;
  EXPECT_THROW(validate_manifest(broken), FormatError);
  EXPECT_THROW(DatasetManifest::from_json("{\"format_version\": 1}"), FormatError);
}

TEST(HeatColormap, EndpointsAndClamping) {
  const auto& lut = heat_colormap();
  EXPECT_EQ(lut.front(), (std::array<std::uint8_t, 3>{0, 0, 4}));
  EXPECT_EQ(lut.back(), (std::array<std::uint8_t, 3>{252, 255, 164}));
  EXPECT_EQ(heat_color(0.0, 10.0), lut.front());
  EXPECT_EQ(heat_color(10.0, 10.0), lut.back());
  EXPECT_EQ(heat_color(-5.0, 10.0), lut.front());
  EXPECT_EQ(heat_color(99.0, 10.0), lut.back());
  // Brightness rises monotonically along the map.
  for (std::size_t i = 1; i < lut.size(); ++i) {
    const int prev = lut[i - 1][0] + lut[i - 1][1] + lut[i - 1][2];
    const int cur = lut[i][0] + lut[i][1] + lut[i][2];
    EXPECT_GE(cur, prev - 2) << i;
  }
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<EpochMetrics> rows{{1, 1.25, 40.5, 0.375, -0.125, 0.25, 0.0}, {2, 1.0, 30.0, 0.25, 0.0625, 0.125, 1.5}};
  const auto back = parse_metrics_csv(metrics_csv(rows));
  EXPECT_EQ(back, rows);
  EXPECT_TRUE(parse_metrics_csv(metrics_csv({})).empty());
}

TEST(MetricsCsv, ErrorsNameTheLine) {
  const std::string header = "epoch,d_loss,g_loss,g_conditional,mean_signed_error,mean_abs_error,wall_seconds\n";
  try {
    parse_metrics_csv(header + "1,1,1,1,1,1,0\n2,1,oops,1,1,1,0\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_metrics_csv(header + "1,1,1,1,1,1,0,9\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv("epoch,loss\n1,2\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv(""), FormatError);
}

TEST(Report, TriptychPanelsAgreeForPerfectPrediction) {
  const std::size_t n = 8;
  Raster<float> scene(n, n, 3, 0.5f), truth(n, n, 1);
  for (std::size_t i = 0; i < truth.size(); ++i) truth.data()[i] = static_cast<float>(i % 7);
  const int scale = 2;
  const RgbImage img = render_triptych(scene, truth, truth, 6.0, scale);
  const std::size_t w = n * scale, gap = 8, top = 8 + 16;
  EXPECT_EQ(img.width, 3 * w + 4 * gap);
  for (std::size_t y = top; y < top + n * scale; ++y)
    for (std::size_t x = 0; x < w; ++x) EXPECT_EQ(img.get(gap + w + gap + x, y), img.get(gap + 2 * (w + gap) + x, y));
  EXPECT_EQ(img.get(gap + w + gap, top), heat_colormap().front());
  EXPECT_EQ(img.get(gap, top), (std::array<std::uint8_t, 3>{128, 128, 128}));

  Raster<float> other = truth;
  other.data()[0] = 6.0f;
  const RgbImage diff = render_triptych(scene, truth, other, 6.0, scale);
  EXPECT_NE(diff.get(gap + w + gap, top), diff.get(gap + 2 * (w + gap), top));
  EXPECT_THROW(render_triptych(scene, truth, Raster<float>(n + 1, n, 1), 6.0), DimensionError);
}

TEST(Report, CurvesOverlaySeries) {
  const std::vector<EpochMetrics> a{{1, 0, 0, 0, -0.5, 0.5, 0}, {2, 0, 0, 0, -0.2, 0.3, 0}};
  const std::vector<EpochMetrics> b{{1, 0, 0, 0, 0.1, 0.1, 0}, {2, 0, 0, 0, 0.05, 0.08, 0}};
  const RgbImage one = render_error_curves({{"unet", a}});
  const RgbImage two = render_error_curves({{"unet", a}, {"encdec", b}});
  EXPECT_EQ(one.width, two.width);
  EXPECT_EQ(one.height, two.height);
  EXPECT_NE(one.pixels, two.pixels);
  EXPECT_EQ(render_error_curves({{"unet", a}}).pixels, one.pixels);
}

TEST(Png, SignatureAndHeader) {
  test::TempDir dir("png");
  RgbImage img(7, 3, {10, 20, 30});
  img.set(0, 0, {255, 0, 0});
  write_png(dir.path() / "x.png", img);
  const auto bytes = read_file_bytes(dir.path() / "x.png");
  ASSERT_GT(bytes.size(), 33u);
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  EXPECT_TRUE(std::equal(sig, sig + 8, bytes.begin()));
  EXPECT_EQ(be32(bytes, 16), 7u);
  EXPECT_EQ(be32(bytes, 20), 3u);
  EXPECT_EQ(img.get(0, 0), (std::array<std::uint8_t, 3>{255, 0, 0}));
  EXPECT_EQ(img.get(6, 2), (std::array<std::uint8_t, 3>{10, 20, 30}));
}

}  // namespace
}  // namespace kcal
