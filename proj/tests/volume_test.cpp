#include <gtest/gtest.h>

#include <cstring>

#include "test_util.hpp"
#include "xprospect/binio.hpp"
#include "xprospect/error.hpp"
#include "xprospect/io.hpp"
#include "xprospect/volume.hpp"

namespace xprospect {
namespace {

Volume3D hu_volume(std::vector<float> values) {
  // Pads a short list into a 2x2x2 HU volume.
  values.resize(8, 0.0f);
  return Volume3D(2, 2, 2, std::move(values), Domain::HU);
}

TEST(NormalizeHu, MapsRangeEndpointsAndClamps) {
  const auto out = normalize_hu(hu_volume({-1000.0f, 0.0f, 1500.0f, 1000.0f, -3000.0f}));
  EXPECT_EQ(out.domain(), Domain::Unit);
  EXPECT_FLOAT_EQ(out.data()[0], 0.0f);
  EXPECT_FLOAT_EQ(out.data()[1], 0.5f);
  EXPECT_FLOAT_EQ(out.data()[2], 1.0f);
  EXPECT_FLOAT_EQ(out.data()[3], 1.0f);
  EXPECT_FLOAT_EQ(out.data()[4], 0.0f);
}

TEST(NormalizeHu, RejectsUnitDomain) {
  EXPECT_THROW(normalize_hu(Volume3D::filled(2, 0.5f, Domain::Unit)), InvalidInput);
}

TEST(NormalizeHu, MonotoneAndInUnitRange) {
  auto hu = test::uniform_values(4096, 7, -3000.0f, 3000.0f);
  std::sort(hu.begin(), hu.end());
  const auto out = normalize_hu(Volume3D(16, 16, 16, hu, Domain::HU));
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(out.data()[i - 1], out.data()[i]);
  for (float f : out.data()) {
    EXPECT_GE(f, 0.0f);
    EXPECT_LE(f, 1.0f);
  }
}

TEST(NormalizeHu, ReapplyingToMappedBackValuesIsIdempotent) {
  const auto once = normalize_hu(hu_volume({-2000.0f, -500.0f, 250.0f, 4000.0f}));
  std::vector<float> back;
  for (float u : once.data()) back.push_back(-1000.0f + 2000.0f * u);
  const auto twice = normalize_hu(Volume3D(2, 2, 2, back, Domain::HU));
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_FLOAT_EQ(once.data()[i], twice.data()[i]);
}

TEST(Volume, UnitDomainRejectsOutOfRange) {
  EXPECT_THROW(Volume3D(1, 1, 2, {0.5f, 1.5f}, Domain::Unit), InvalidInput);
  EXPECT_THROW(Volume3D(2, 2, 2, std::vector<float>(7), Domain::HU), InvalidInput);
}

TEST(ResizeVolume, SameSizeIsBitwiseIdentical) {
  const auto v = test::random_unit_volume(5, 3);
  EXPECT_EQ(resize_volume(v, 5), v);
}

TEST(ResizeVolume, ConstantsAreFixedPoints) {
  const auto v = Volume3D::filled(6, 0.25f, Domain::Unit);
  for (std::size_t d : {2u, 3u, 9u, 12u}) {
    const auto r = resize_volume(v, d);
    for (float f : r.data()) EXPECT_FLOAT_EQ(f, 0.25f);
  }
}

TEST(ResizeVolume, AlignCornersLinearAlongAxis) {
  // Ramp along x only: [0, 1] resized 2 -> 3 becomes [0, 0.5, 1].
  const Volume3D v(2, 2, 2, {0, 1, 0, 1, 0, 1, 0, 1}, Domain::Unit);
  const auto r = resize_volume(v, 3);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 3; ++y) {
      EXPECT_FLOAT_EQ(r.at(z, y, 0), 0.0f);
      EXPECT_FLOAT_EQ(r.at(z, y, 1), 0.5f);
      EXPECT_FLOAT_EQ(r.at(z, y, 2), 1.0f);
    }
}

TEST(ResizeVolume, NonCubicBecomesCubicAndPreservesDomain) {
  const Volume3D v(2, 3, 4, std::vector<float>(24, -200.0f), Domain::HU);
  const auto r = resize_volume(v, 4);
  EXPECT_TRUE(r.cubic());
  EXPECT_EQ(r.dz(), 4u);
  EXPECT_EQ(r.domain(), Domain::HU);
  for (float f : r.data()) EXPECT_FLOAT_EQ(f, -200.0f);
}

TEST(ResizeVolume, RejectsTinyTarget) {
  EXPECT_THROW(resize_volume(Volume3D::filled(4, 0.0f, Domain::Unit), 1), InvalidInput);
}

TEST(ExportSlice, MatchesDirectIndexing) {
  const auto v = test::random_unit_volume(6, 11);
  const auto ax = export_slice(v, SliceAxis::Axial, 2);
  const auto co = export_slice(v, SliceAxis::Coronal, 3);
  const auto sa = export_slice(v, SliceAxis::Sagittal, 5);
  const auto raw = v.data();
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      EXPECT_EQ(ax.at(a, b), raw[(2 * 6 + a) * 6 + b]);
      EXPECT_EQ(co.at(a, b), raw[(a * 6 + 3) * 6 + b]);
      EXPECT_EQ(sa.at(a, b), raw[(a * 6 + b) * 6 + 5]);
    }
  EXPECT_EQ(ax.view(), View::Slice);
}

TEST(ExportSlice, ConstantVolumeGivesConstantImage) {
  const auto img = export_slice(Volume3D::filled(4, 0.3f, Domain::Unit), SliceAxis::Coronal, 1);
  for (float f : img.data()) EXPECT_FLOAT_EQ(f, 0.3f);
}

TEST(ExportSlice, IndexOutOfRange) {
  EXPECT_THROW(export_slice(Volume3D::filled(4, 0.0f, Domain::Unit), SliceAxis::Axial, 4), InvalidInput);
}

TEST(VolumeIo, RoundTripIsBitExact) {
  const auto dir = test::scratch_dir("volio");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = test::random_unit_volume(3 + seed, seed);
    save_volume(v, (dir / "v.xvol").string());
    EXPECT_EQ(load_volume((dir / "v.xvol").string()), v);
  }
  const Volume3D hu(2, 3, 4, test::uniform_values(24, 9, -1000, 3000), Domain::HU);
  EXPECT_EQ(decode_volume(encode_volume(hu)), hu);
}

TEST(VolumeIo, HeaderLayout) {
  const auto bytes = encode_volume(Volume3D(1, 2, 3, std::vector<float>(6, 1.0f), Domain::Unit));
  ASSERT_EQ(bytes.size(), 5u + 1 + 12 + 1 + 24);
  EXPECT_EQ(bytes.substr(0, 5), "XVOL1");
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);   // dz LE
  EXPECT_EQ(bytes[10], 2);  // dy
  EXPECT_EQ(bytes[14], 3);  // dx
  EXPECT_EQ(bytes[18], 1);  // Unit
  float f;
  std::memcpy(&f, bytes.data() + 19, 4);
  EXPECT_EQ(f, 1.0f);
}

TEST(VolumeIo, BadMagic) {
  auto bytes = encode_volume(Volume3D::filled(2, 0.0f, Domain::Unit));
  bytes.replace(0, 5, "XXXX1");
  try {
    decode_volume(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(VolumeIo, TruncatedPayloadReportsOffset) {
  auto bytes = encode_volume(Volume3D::filled(4, 0.0f, Domain::Unit));
  bytes.resize(bytes.size() - 4);  // 63 floats left
  try {
    decode_volume(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 19u);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(VolumeIo, DimOverflowRejected) {
  binio::Writer w;
  w.bytes("XVOL1");
  w.u8(0);
  w.u32(0xFFFFFFFFu);
  w.u32(0xFFFFFFFFu);
  w.u32(0xFFFFFFFFu);
  w.u8(1);
  try {
    decode_volume(w.buffer());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
}

TEST(ImageIo, RoundTripAndViewCode) {
  const auto img = test::random_image(5, View::Lateral, 4);
  const auto bytes = encode_image(img);
  EXPECT_EQ(bytes.substr(0, 5), "XIMG1");
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(decode_image(bytes), img);
  EXPECT_THROW(decode_image(bytes.substr(0, bytes.size() - 1)), FormatError);
}

}  // namespace
}  // namespace xprospect
