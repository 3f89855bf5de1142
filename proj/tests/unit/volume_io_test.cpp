#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "brainage/error.hpp"
#include "brainage/nifti.hpp"
#include "brainage/volume.hpp"
#include "oracles.hpp"

namespace {

using brainage::Extent3;
using brainage::Interpolation;
using brainage::RigidTransform;
using brainage::TargetGrid;
using brainage::Volume3D;
namespace bt = brainage::testing;

Volume3D random_volume(Extent3 dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(brainage::voxel_count(dims));
  for (auto& v : data) v = u(rng);
  return Volume3D(dims, {1, 1, 1}, std::move(data));
}

void expect_bitwise(const Volume3D& a, const Volume3D& b) {
  ASSERT_EQ(a.dims(), b.dims());
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)));
}

std::vector<std::uint8_t> with_payload(std::vector<std::uint8_t> header, const void* payload, std::size_t bytes) {
  const auto* p = static_cast<const std::uint8_t*>(payload);
  header.insert(header.end(), p, p + bytes);
  return header;
}

// ---------------------------------------------------------------- Volume3D

TEST(Volume3D, RejectsBrokenInvariants) {
  EXPECT_THROW(Volume3D({2, 2, 2}, {1, 1, 1}, std::vector<float>(7)), brainage::ValidationError);
  EXPECT_THROW(Volume3D({2, 0, 2}, {1, 1, 1}, {}), brainage::ValidationError);
  EXPECT_THROW(Volume3D({1, 1, 1}, {1, 0, 1}, {1.0f}), brainage::ValidationError);
  EXPECT_THROW(Volume3D({1, 1, 2}, {1, 1, 1}, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
               brainage::ValidationError);
}

TEST(RigidTransform, ComposedWithInverseIsIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> angle(-179.0, 179.0), shift(-20.0, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    RigidTransform t;
    t.rotation = {angle(rng), angle(rng) / 2.0, angle(rng)};
    t.translation = {shift(rng), shift(rng), shift(rng)};
    const auto m = brainage::multiply(t.matrix(), t.inverse().matrix());
    const auto id = brainage::identity_matrix();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(m[i][j], id[i][j], 1e-9) << "trial " << trial;
  }
}

// ------------------------------------------------------------------- NIfTI

TEST(Nifti, Int16WithSlopeAndIntercept) {
  bt::TempDir dir("nifti");
  bt::NiftiFields f;
  f.dims = {2, 2, 2};
  f.datatype = 4;
  f.bitpix = 16;
  f.scl_slope = 2.0f;
  f.scl_inter = 1.0f;
  const short values[8] = {0, 1, 2, 3, 4, 5, 6, 7};
  bt::write_bytes(dir / "a.nii", with_payload(bt::nifti_header_bytes(f), values, sizeof(values)));

  const Volume3D v = brainage::read_nifti(dir / "a.nii");
  EXPECT_EQ(v.dims(), (Extent3{2, 2, 2}));
  // NIfTI dim[1] (fastest) is w; with equal dims the flat order is preserved.
  for (int i = 0; i < 8; ++i) EXPECT_EQ(v.data()[i], 2.0f * i + 1.0f);
}

TEST(Nifti, AxisOrderFollowsHeaderDims) {
  bt::TempDir dir("nifti");
  bt::NiftiFields f;
  f.dims = {4, 3, 2};  // dim[1]=w, dim[2]=h, dim[3]=z
  f.pixdim = {0.5f, 1.5f, 2.5f};
  std::vector<float> values(24);
  for (int i = 0; i < 24; ++i) values[i] = static_cast<float>(i);
  bt::write_bytes(dir / "a.nii", with_payload(bt::nifti_header_bytes(f), values.data(), 96));
  const Volume3D v = brainage::read_nifti(dir / "a.nii");
  EXPECT_EQ(v.dims(), (Extent3{2, 3, 4}));
  EXPECT_EQ(v.voxel_size(), (brainage::Spacing3{2.5f, 1.5f, 0.5f}));
  EXPECT_EQ(v.at(1, 2, 3), 23.0f);
  EXPECT_EQ(v.at(0, 1, 0), 4.0f);
}

TEST(Nifti, ZeroSlopePassesValuesThrough) {
  bt::TempDir dir("nifti");
  bt::NiftiFields f;
  f.dims = {3, 1, 1};
  f.datatype = 2;
  f.bitpix = 8;
  f.scl_slope = 0.0f;
  f.scl_inter = 100.0f;
  const std::uint8_t values[3] = {0, 7, 255};
  bt::write_bytes(dir / "u8.nii", with_payload(bt::nifti_header_bytes(f), values, 3));
  const Volume3D v = brainage::read_nifti(dir / "u8.nii");
  EXPECT_EQ(v.data()[0], 0.0f);
  EXPECT_EQ(v.data()[1], 7.0f);
  EXPECT_EQ(v.data()[2], 255.0f);
}

TEST(Nifti, RoundTripIsBitExact) {
  bt::TempDir dir("nifti");
  Volume3D v = random_volume({5, 7, 6}, 3);
  v = Volume3D(v.dims(), {1.25f, 0.9f, 2.0f}, std::vector<float>(v.data().begin(), v.data().end()),
               {3.5f, -1.25f, 0.1f});
  v.data()[4] = -0.0f;
  v.data()[5] = 1e-42f;  // subnormal
  brainage::write_nifti(v, dir / "v.nii");
  const Volume3D back = brainage::read_nifti(dir / "v.nii");
  EXPECT_TRUE(brainage::bitwise_equal(v, back));
  EXPECT_EQ(back.voxel_size(), v.voxel_size());
  EXPECT_EQ(back.origin_offset(), v.origin_offset());
}

TEST(Nifti, SingleVoxelFileLayout) {
  bt::TempDir dir("nifti");
  brainage::write_nifti(Volume3D({1, 1, 1}, {1, 1, 1}, {3.5f}), dir / "one.nii");
  const auto bytes = bt::read_bytes(dir / "one.nii");
  ASSERT_EQ(bytes.size(), 356u);
  int sizeof_hdr = 0;
  short datatype = 0;
  float vox_offset = 0, slope = 0, inter = -1, value = 0;
  std::memcpy(&sizeof_hdr, &bytes[0], 4);
  std::memcpy(&datatype, &bytes[70], 2);
  std::memcpy(&vox_offset, &bytes[108], 4);
  std::memcpy(&slope, &bytes[112], 4);
  std::memcpy(&inter, &bytes[116], 4);
  std::memcpy(&value, &bytes[352], 4);
  EXPECT_EQ(sizeof_hdr, 348);
  EXPECT_EQ(datatype, 16);
  EXPECT_EQ(vox_offset, 352.0f);
  EXPECT_EQ(slope, 1.0f);
  EXPECT_EQ(inter, 0.0f);
  EXPECT_EQ(0, std::memcmp(&bytes[344], "n+1\0", 4));
  EXPECT_EQ(value, 3.5f);
}

TEST(Nifti, NonFiniteVolumeIsRejectedBeforeWriting) {
  bt::TempDir dir("nifti");
  Volume3D v = Volume3D::zeros({2, 2, 2});
  v.data()[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(brainage::write_nifti(v, dir / "bad.nii"), brainage::ValidationError);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.nii"));
}

TEST(Nifti, ErrorKinds) {
  bt::TempDir dir("nifti");
  auto expect_format = [&](const std::vector<std::uint8_t>& bytes, const std::string& needle) {
    bt::write_bytes(dir / "x.nii", bytes);
    try {
      brainage::read_nifti(dir / "x.nii");
      ADD_FAILURE() << "expected a format error containing " << needle;
    } catch (const brainage::Error& e) {
      EXPECT_EQ(e.kind(), brainage::ErrorKind::kFormat);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  const float one = 1.0f;

  bt::NiftiFields bad_magic;
  bad_magic.magic = {'n', 'i', '1', '\0'};
  expect_format(with_payload(bt::nifti_header_bytes(bad_magic), &one, 4), "magic");

  std::vector<std::uint8_t> gz = bt::nifti_header_bytes({});
  gz[0] = 0x1f;
  gz[1] = 0x8b;
  expect_format(gz, "compressed input unsupported");

  bt::NiftiFields f64;
  f64.datatype = 64;
  f64.bitpix = 64;
  expect_format(with_payload(bt::nifti_header_bytes(f64), &one, 4), "64");

  const float nan = std::numeric_limits<float>::quiet_NaN();
  expect_format(with_payload(bt::nifti_header_bytes({}), &nan, 4), "non-finite");

  expect_format(bt::nifti_header_bytes({}), "truncated");
}

TEST(Nifti, MissingFileAndUnwritablePathAreIoErrors) {
  bt::TempDir dir("nifti");
  try {
    brainage::read_nifti(dir / "absent.nii");
    FAIL();
  } catch (const brainage::Error& e) {
    EXPECT_EQ(e.kind(), brainage::ErrorKind::kIo);
  }
  try {
    brainage::write_nifti(Volume3D::zeros({1, 1, 1}), dir / "no" / "such" / "dir.nii");
    FAIL();
  } catch (const brainage::Error& e) {
    EXPECT_EQ(e.kind(), brainage::ErrorKind::kIo);
  }
}

// ---------------------------------------------------------------- resample

TEST(Resample, IdentityIsBitExactForBothModes) {
  const Volume3D v = random_volume({6, 7, 5}, 9);
  for (auto mode : {Interpolation::kTrilinear, Interpolation::kCubicSpline}) {
    expect_bitwise(brainage::resample(v, RigidTransform::identity(), TargetGrid::of(v), mode), v);
  }
}

TEST(Resample, IntegerTranslationIsAnIndexShift) {
  const Volume3D v = random_volume({4, 5, 6}, 10);
  RigidTransform t;
  t.translation.x_mm = 1.0;  // x runs along w
  const Volume3D out = brainage::resample(v, t, TargetGrid::of(v), Interpolation::kTrilinear);
  const auto expected = bt::shift_with_zero_fill({v.data().begin(), v.data().end()}, v.dims(), 0, 0, 1);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(out.data()[i], expected[i]) << i;
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t h = 0; h < 5; ++h) EXPECT_EQ(out.at(z, h, 0), 0.0f);
}

TEST(Resample, QuarterTurnAboutZIsAnIndexPermutation) {
  // Asymmetric marker: every voxel distinct.
  std::vector<float> data(27);
  for (int i = 0; i < 27; ++i) data[i] = static_cast<float>(i + 1);
  const Volume3D v({3, 3, 3}, {1, 1, 1}, data);
  RigidTransform t;
  t.rotation.z_deg = 90.0;
  for (auto mode : {Interpolation::kTrilinear, Interpolation::kCubicSpline}) {
    const Volume3D out = brainage::resample(v, t, TargetGrid::of(v), mode);
    // p' = Rz(90) p maps (x, y) to (-y, x); sampling the inverse gives
    // out(x', y') = in(y', -x'), i.e. out[z][h][w] = in[z][2 - w][h].
    for (std::size_t z = 0; z < 3; ++z)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(out.at(z, h, w), v.at(z, 2 - w, h));
  }
}

TEST(Resample, TrilinearStaysInsideInputRangeCubicStaysFinite) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> angle(-40, 40), shift(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Volume3D v = random_volume({7, 8, 9}, 100 + trial);
    const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
    RigidTransform t;
    t.rotation = {angle(rng), angle(rng), angle(rng)};
    t.translation = {shift(rng), shift(rng), shift(rng)};
    const Volume3D tri = brainage::resample(v, t, TargetGrid::of(v), Interpolation::kTrilinear);
    for (float x : tri.data()) {
      // Zero fill may sit below the input minimum.
      if (x != 0.0f) {
        EXPECT_GE(x, *lo);
        EXPECT_LE(x, *hi);
      }
    }
    const Volume3D cub = brainage::resample(v, t, TargetGrid::of(v), Interpolation::kCubicSpline);
    for (float x : cub.data()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(Resample, ForwardThenInverseRestoresSmoothInterior) {
  const Extent3 dims{24, 24, 24};
  Volume3D v = Volume3D::zeros(dims);
  for (std::size_t z = 0; z < 24; ++z)
    for (std::size_t h = 0; h < 24; ++h)
      for (std::size_t w = 0; w < 24; ++w) {
        v.at(z, h, w) = static_cast<float>(0.5 + 0.2 * std::sin(0.05 * w) * std::cos(0.04 * h) + 0.004 * z);
      }
  RigidTransform t;
  t.rotation = {7.0, -5.0, 3.0};
  t.translation = {1.3, -0.7, 0.4};
  const Volume3D there = brainage::resample(v, t, TargetGrid::of(v), Interpolation::kTrilinear);
  const Volume3D back = brainage::resample(there, t.inverse(), TargetGrid::of(v), Interpolation::kTrilinear);
  double worst = 0.0;
  for (std::size_t z = 6; z < 18; ++z)
    for (std::size_t h = 6; h < 18; ++h)
      for (std::size_t w = 6; w < 18; ++w) worst = std::max(worst, double(std::abs(back.at(z, h, w) - v.at(z, h, w))));
  EXPECT_LT(worst, 1e-3);
}

TEST(Resample, OutputTakesGridGeometry) {
  const Volume3D v = random_volume({4, 4, 4}, 1);
  const Volume3D out = brainage::resample(v, {}, TargetGrid{{2, 3, 5}, {2, 2, 2}}, Interpolation::kTrilinear);
  EXPECT_EQ(out.dims(), (Extent3{2, 3, 5}));
  EXPECT_EQ(out.voxel_size(), (brainage::Spacing3{2, 2, 2}));
}

// ------------------------------------------------------------ to_canonical

TEST(ToCanonical, VolumeOnTargetGridIsUnchanged) {
  const Volume3D v = random_volume({5, 6, 7}, 4);
  expect_bitwise(brainage::to_canonical(v, TargetGrid::of(v)), v);
}

TEST(ToCanonical, SmallVolumeIsCenteredWithZeroBorder) {
  const Volume3D v = random_volume({10, 10, 10}, 5);
  const Volume3D out = brainage::to_canonical(v, TargetGrid{{12, 12, 12}, {1, 1, 1}}, Interpolation::kTrilinear);
  for (std::size_t z = 0; z < 12; ++z)
    for (std::size_t h = 0; h < 12; ++h)
      for (std::size_t w = 0; w < 12; ++w) {
        const bool inner = z >= 1 && z <= 10 && h >= 1 && h <= 10 && w >= 1 && w <= 10;
        EXPECT_EQ(out.at(z, h, w), inner ? v.at(z - 1, h - 1, w - 1) : 0.0f);
      }
}

TEST(ToCanonical, OriginOffsetIsRemoved) {
  Volume3D v = random_volume({6, 6, 6}, 6);
  v.set_origin_offset({0, 0, 2});  // physical centre sits 2 mm along +x (w)
  const std::vector<float> values(v.data().begin(), v.data().end());

  // A plain resample respects the offset: content lands 2 voxels along +w.
  const Volume3D plain = brainage::resample(v, {}, TargetGrid::of(v), Interpolation::kTrilinear);
  const auto shifted = bt::shift_with_zero_fill(values, v.dims(), 0, 0, 2);
  for (std::size_t i = 0; i < shifted.size(); ++i) EXPECT_EQ(plain.data()[i], shifted[i]);

  // Canonicalization moves the volume centre back onto the grid centre.
  const Volume3D out = brainage::to_canonical(v, TargetGrid::of(v), Interpolation::kTrilinear);
  for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(out.data()[i], values[i]);
  EXPECT_EQ(out.origin_offset(), (brainage::Spacing3{0, 0, 0}));
}

TEST(ToCanonical, DefaultGridMatchesRawInputDimensions) {
  const TargetGrid grid;
  EXPECT_EQ(grid.dims, (Extent3{182, 218, 182}));
  EXPECT_EQ(grid.voxel_size, (brainage::Spacing3{1, 1, 1}));
  EXPECT_EQ(brainage::kCanonicalRawDims, (Extent3{182, 218, 182}));
  EXPECT_EQ(brainage::kCanonicalTissueDims, (Extent3{121, 145, 121}));
}

}  // namespace
