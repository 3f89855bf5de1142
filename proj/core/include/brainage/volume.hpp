#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace brainage {

/// Voxel counts per axis, ordered (z, h, w); w varies fastest in memory.
using Extent3 = std::array<std::size_t, 3>;
/// Per-axis physical quantity in mm, ordered like Extent3.
using Spacing3 = std::array<float, 3>;

std::size_t voxel_count(const Extent3& dims);

/// Dense 3D scalar field on a regular grid.
///
/// origin_offset is the physical position (mm) of the grid center, so a
/// volume with zero offset is centered on the origin of its frame. NIfTI I/O
/// stores it in the qoffset fields.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Extent3 dims, Spacing3 voxel_size, std::vector<float> data, Spacing3 origin_offset = {0, 0, 0});

  static Volume3D zeros(Extent3 dims, Spacing3 voxel_size = {1, 1, 1});

  const Extent3& dims() const { return dims_; }
  const Spacing3& voxel_size() const { return voxel_size_; }
  const Spacing3& origin_offset() const { return origin_offset_; }
  void set_origin_offset(Spacing3 origin) { origin_offset_ = origin; }

  std::size_t size() const { return data_.size(); }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::size_t index(std::size_t z, std::size_t h, std::size_t w) const {
    return (z * dims_[1] + h) * dims_[2] + w;
  }
  float& at(std::size_t z, std::size_t h, std::size_t w) { return data_[index(z, h, w)]; }
  float at(std::size_t z, std::size_t h, std::size_t w) const { return data_[index(z, h, w)]; }

  /// Throws ValidationError on any broken invariant (dims, spacing, length,
  /// non-finite values).
  void validate() const;

 private:
  Extent3 dims_{0, 0, 0};
  Spacing3 voxel_size_{1, 1, 1};
  Spacing3 origin_offset_{0, 0, 0};
  std::vector<float> data_;
};

/// True when geometry matches and every sample has the same bit pattern.
bool bitwise_equal(const Volume3D& a, const Volume3D& b);

struct TargetGrid {
  Extent3 dims{182, 218, 182};
  Spacing3 voxel_size{1, 1, 1};

  void validate() const;
  static TargetGrid of(const Volume3D& v) { return {v.dims(), v.voxel_size()}; }
};

/// Canonical 1 mm MNI-sized grid used for raw T1 input.
inline constexpr Extent3 kCanonicalRawDims{182, 218, 182};
/// Grid of registered GM / WM tissue maps.
inline constexpr Extent3 kCanonicalTissueDims{121, 145, 121};

using Matrix4 = std::array<std::array<double, 4>, 4>;

Matrix4 identity_matrix();
Matrix4 multiply(const Matrix4& a, const Matrix4& b);

/// Six-degree-of-freedom transform p' = R p + t in physical (x, y, z) space,
/// where x runs along w, y along h and z along the slice axis.
/// R = Rz(z_deg) * Ry(y_deg) * Rx(x_deg): intrinsic rotations applied z, then y, then x.
struct RigidTransform {
  struct Angles {
    double z_deg = 0, y_deg = 0, x_deg = 0;
  };
  struct Translation {
    double x_mm = 0, y_mm = 0, z_mm = 0;
  };

  Angles rotation;
  Translation translation;

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Matrix4& m);

  Matrix4 matrix() const;
  RigidTransform inverse() const;
};

enum class Interpolation { kTrilinear, kCubicSpline };

/// Samples `volume` onto `grid`. Each output voxel center, expressed in the
/// grid's centered physical frame, is mapped through the inverse of
/// `transform` into the input frame. Samples outside the input field are 0.
/// The result has zero origin offset.
Volume3D resample(const Volume3D& volume, const RigidTransform& transform, const TargetGrid& grid,
                  Interpolation interpolation);

/// Resamples onto `grid` with identity rotation and the translation that
/// moves the volume center onto the grid center.
Volume3D to_canonical(const Volume3D& volume, const TargetGrid& grid,
                      Interpolation interpolation = Interpolation::kCubicSpline);

}  // namespace brainage
