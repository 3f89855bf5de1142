#include <algorithm>
#include <cmath>
#include <numbers>

#include "brainage/error.hpp"
#include "brainage/parallel.hpp"
#include "brainage/volume.hpp"

namespace brainage {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Sample positions this close to a lattice node are treated as on the node, so
// that lattice-aligned resampling is exact despite mm <-> voxel round trips.
constexpr double kSnap = 1e-9;

double snap(double c) {
  const double r = std::round(c);
  return std::abs(c - r) < kSnap ? r : c;
}

// Rotation part only; 3x3 row-major.
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rotation_matrix(const RigidTransform::Angles& a) {
  const double cz = std::cos(a.z_deg * kDegToRad), sz = std::sin(a.z_deg * kDegToRad);
  const double cy = std::cos(a.y_deg * kDegToRad), sy = std::sin(a.y_deg * kDegToRad);
  const double cx = std::cos(a.x_deg * kDegToRad), sx = std::sin(a.x_deg * kDegToRad);
  return {{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
           {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
           {-sy, cy * sx, cy * cx}}};
}

struct Sampler {
  const Volume3D& v;
  std::size_t nz, nh, nw;

  float at(std::ptrdiff_t z, std::ptrdiff_t h, std::ptrdiff_t w) const {
    return v.at(static_cast<std::size_t>(z), static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  }

  static bool inside(double c, std::size_t n) { return c >= 0.0 && c <= static_cast<double>(n - 1); }

  float trilinear(double cz, double ch, double cw) const {
    if (!inside(cz, nz) || !inside(ch, nh) || !inside(cw, nw)) return 0.0f;
    const auto z0 = static_cast<std::ptrdiff_t>(std::floor(cz));
    const auto h0 = static_cast<std::ptrdiff_t>(std::floor(ch));
    const auto w0 = static_cast<std::ptrdiff_t>(std::floor(cw));
    const double fz = cz - z0, fh = ch - h0, fw = cw - w0;
    const std::ptrdiff_t z1 = std::min<std::ptrdiff_t>(z0 + 1, nz - 1);
    const std::ptrdiff_t h1 = std::min<std::ptrdiff_t>(h0 + 1, nh - 1);
    const std::ptrdiff_t w1 = std::min<std::ptrdiff_t>(w0 + 1, nw - 1);
    if (fz == 0.0 && fh == 0.0 && fw == 0.0) return at(z0, h0, w0);
    const double c00 = at(z0, h0, w0) * (1 - fw) + at(z0, h0, w1) * fw;
    const double c01 = at(z0, h1, w0) * (1 - fw) + at(z0, h1, w1) * fw;
    const double c10 = at(z1, h0, w0) * (1 - fw) + at(z1, h0, w1) * fw;
    const double c11 = at(z1, h1, w0) * (1 - fw) + at(z1, h1, w1) * fw;
    const double c0 = c00 * (1 - fh) + c01 * fh;
    const double c1 = c10 * (1 - fh) + c11 * fh;
    return static_cast<float>(c0 * (1 - fz) + c1 * fz);
  }

  // Catmull-Rom weights for taps at offsets -1, 0, 1, 2.
  static std::array<double, 4> catmull_rom(double t) {
    const double t2 = t * t, t3 = t2 * t;
    return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t),
            0.5 * (t3 - t2)};
  }

  float cubic(double cz, double ch, double cw) const {
    if (!inside(cz, nz) || !inside(ch, nh) || !inside(cw, nw)) return 0.0f;
    const auto z0 = static_cast<std::ptrdiff_t>(std::floor(cz));
    const auto h0 = static_cast<std::ptrdiff_t>(std::floor(ch));
    const auto w0 = static_cast<std::ptrdiff_t>(std::floor(cw));
    if (cz == z0 && ch == h0 && cw == w0) return at(z0, h0, w0);
    const auto wz = catmull_rom(cz - z0), wh = catmull_rom(ch - h0), ww = catmull_rom(cw - w0);
    auto clampi = [](std::ptrdiff_t i, std::size_t n) {
      return std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
    };
    double acc = 0.0;
    for (int a = 0; a < 4; ++a) {
      const std::ptrdiff_t z = clampi(z0 - 1 + a, nz);
      double plane = 0.0;
      for (int b = 0; b < 4; ++b) {
        const std::ptrdiff_t h = clampi(h0 - 1 + b, nh);
        double row = 0.0;
        for (int c = 0; c < 4; ++c) row += ww[c] * at(z, h, clampi(w0 - 1 + c, nw));
        plane += wh[b] * row;
      }
      acc += wz[a] * plane;
    }
    return static_cast<float>(acc);
  }
};

}  // namespace

Matrix4 identity_matrix() {
  Matrix4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

Matrix4 multiply(const Matrix4& a, const Matrix4& b) {
  Matrix4 out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Matrix4 RigidTransform::matrix() const {
  const Mat3 r = rotation_matrix(rotation);
  Matrix4 m = identity_matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = r[i][j];
  m[0][3] = translation.x_mm;
  m[1][3] = translation.y_mm;
  m[2][3] = translation.z_mm;
  return m;
}

RigidTransform RigidTransform::from_matrix(const Matrix4& m) {
  RigidTransform t;
  const double cy = std::hypot(m[0][0], m[1][0]);
  t.rotation.y_deg = std::atan2(-m[2][0], cy) / kDegToRad;
  if (cy > 1e-12) {
    t.rotation.z_deg = std::atan2(m[1][0], m[0][0]) / kDegToRad;
    t.rotation.x_deg = std::atan2(m[2][1], m[2][2]) / kDegToRad;
  } else {
    // Gimbal lock: only z - x (or z + x) is determined; put it all on z.
    t.rotation.z_deg = std::atan2(-m[0][1], m[1][1]) / kDegToRad;
    t.rotation.x_deg = 0.0;
  }
  t.translation = {m[0][3], m[1][3], m[2][3]};
  return t;
}

RigidTransform RigidTransform::inverse() const {
  const Matrix4 m = matrix();
  Matrix4 inv = identity_matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv[i][j] = m[j][i];
  for (int i = 0; i < 3; ++i) {
    inv[i][3] = -(inv[i][0] * m[0][3] + inv[i][1] * m[1][3] + inv[i][2] * m[2][3]);
  }
  return from_matrix(inv);
}

Volume3D resample(const Volume3D& volume, const RigidTransform& transform, const TargetGrid& grid,
                  Interpolation interpolation) {
  volume.validate();
  grid.validate();

  const Mat3 r = rotation_matrix(transform.rotation);
  const double t[3] = {transform.translation.x_mm, transform.translation.y_mm, transform.translation.z_mm};

  // Axis bookkeeping in physical (x, y, z) order: x <-> w (index 2), y <-> h (1), z <-> slice (0).
  const auto& in_dims = volume.dims();
  const auto& in_vs = volume.voxel_size();
  const auto& in_origin = volume.origin_offset();
  const double in_center[3] = {(in_dims[2] - 1) / 2.0, (in_dims[1] - 1) / 2.0, (in_dims[0] - 1) / 2.0};
  const double in_spacing[3] = {in_vs[2], in_vs[1], in_vs[0]};
  const double in_off[3] = {in_origin[2], in_origin[1], in_origin[0]};
  const double out_center[3] = {(grid.dims[2] - 1) / 2.0, (grid.dims[1] - 1) / 2.0, (grid.dims[0] - 1) / 2.0};
  const double out_spacing[3] = {grid.voxel_size[2], grid.voxel_size[1], grid.voxel_size[0]};

  Volume3D out = Volume3D::zeros(grid.dims, grid.voxel_size);
  const Sampler sampler{volume, in_dims[0], in_dims[1], in_dims[2]};
  auto out_data = out.data();
  const std::size_t nh = grid.dims[1], nw = grid.dims[2];

  parallel_for(0, grid.dims[0], [&](std::size_t z) {
    for (std::size_t h = 0; h < nh; ++h) {
      for (std::size_t w = 0; w < nw; ++w) {
        const double idx_out[3] = {static_cast<double>(w), static_cast<double>(h), static_cast<double>(z)};
        double q[3];
        for (int a = 0; a < 3; ++a) q[a] = (idx_out[a] - out_center[a]) * out_spacing[a] - t[a];
        // p = R^T (q - t), then into input voxel coordinates.
        double c[3];
        for (int a = 0; a < 3; ++a) {
          const double p = r[0][a] * q[0] + r[1][a] * q[1] + r[2][a] * q[2];
          c[a] = snap((p - in_off[a]) / in_spacing[a] + in_center[a]);
        }
        const float value = interpolation == Interpolation::kTrilinear ? sampler.trilinear(c[2], c[1], c[0])
                                                                        : sampler.cubic(c[2], c[1], c[0]);
        out_data[(z * nh + h) * nw + w] = value;
      }
    }
  });
  return out;
}

Volume3D to_canonical(const Volume3D& volume, const TargetGrid& grid, Interpolation interpolation) {
  RigidTransform centering;
  const auto& o = volume.origin_offset();
  centering.translation = {-static_cast<double>(o[2]), -static_cast<double>(o[1]), -static_cast<double>(o[0])};
  return resample(volume, centering, grid, interpolation);
}

}  // namespace brainage
