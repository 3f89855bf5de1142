#pragma once

#include <filesystem>

#include "brainage/volume.hpp"

namespace brainage {

/// NIfTI-1 datatype codes accepted by read_nifti.
enum class NiftiDatatype : short {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
};

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kNiftiVoxOffset = 352;

/// Reads a single-file, uncompressed, little-endian NIfTI-1 volume.
/// Values are mapped through scl_slope / scl_inter; a zero slope means the
/// stored values are used as-is.
Volume3D read_nifti(const std::filesystem::path& path);

/// Writes a float32 NIfTI-1 file (slope 1, intercept 0, data at offset 352).
void write_nifti(const Volume3D& volume, const std::filesystem::path& path);

}  // namespace brainage
