#include "brainage/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "brainage/error.hpp"

namespace brainage {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace {

// Byte offsets of the nifti_1_header fields we use.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffQoffset = 268;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T load(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void store(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <typename Raw>
void decode(const std::vector<char>& buf, std::size_t offset, std::vector<float>& out, bool scale, double slope,
            double inter) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Raw raw = load<Raw>(buf, offset + i * sizeof(Raw));
    out[i] = scale ? static_cast<float>(static_cast<double>(raw) * slope + inter) : static_cast<float>(raw);
  }
}

}  // namespace

Volume3D read_nifti(const std::filesystem::path& path) {
  const std::vector<char> buf = slurp(path);
  const std::string name = path.string();
  if (buf.size() >= 2 && static_cast<unsigned char>(buf[0]) == 0x1f && static_cast<unsigned char>(buf[1]) == 0x8b) {
    throw FormatError(name + ": compressed input unsupported");
  }
  if (buf.size() < kNiftiHeaderSize) throw FormatError(name + ": file shorter than a NIfTI-1 header");

  const auto sizeof_hdr = load<std::int32_t>(buf, kOffSizeofHdr);
  if (sizeof_hdr != static_cast<std::int32_t>(kNiftiHeaderSize)) {
    if (static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr))) == static_cast<std::int32_t>(kNiftiHeaderSize)) {
      throw FormatError(name + ": big-endian NIfTI unsupported");
    }
    throw FormatError(name + ": bad sizeof_hdr " + std::to_string(sizeof_hdr));
  }
  if (std::memcmp(buf.data() + kOffMagic, "n+1\0", 4) != 0) {
    throw FormatError(name + ": bad magic (expected single-file NIfTI-1 \"n+1\")");
  }

  std::int16_t dim[8];
  std::memcpy(dim, buf.data() + kOffDim, sizeof(dim));
  if (dim[0] < 3 || dim[0] > 7) throw FormatError(name + ": dim[0] = " + std::to_string(dim[0]) + " is not 3D");
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) throw FormatError(name + ": non-positive dim[" + std::to_string(i) + "]");
  }
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw FormatError(name + ": only single 3D volumes are supported");
  }

  const auto datatype = load<std::int16_t>(buf, kOffDatatype);
  std::size_t bytes_per_voxel = 0;
  switch (static_cast<NiftiDatatype>(datatype)) {
    case NiftiDatatype::kUint8: bytes_per_voxel = 1; break;
    case NiftiDatatype::kInt16: bytes_per_voxel = 2; break;
    case NiftiDatatype::kFloat32: bytes_per_voxel = 4; break;
    default: throw FormatError(name + ": unsupported datatype code " + std::to_string(datatype));
  }

  float pixdim[8];
  std::memcpy(pixdim, buf.data() + kOffPixdim, sizeof(pixdim));
  float qoffset[3];
  std::memcpy(qoffset, buf.data() + kOffQoffset, sizeof(qoffset));

  const float vox_offset_f = load<float>(buf, kOffVoxOffset);
  if (!(vox_offset_f >= static_cast<float>(kNiftiHeaderSize))) {
    throw FormatError(name + ": vox_offset below header size");
  }
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

  // NIfTI axis i (x fastest) maps onto our (z, h, w) = (dim3, dim2, dim1).
  const Extent3 dims{static_cast<std::size_t>(dim[3]), static_cast<std::size_t>(dim[2]),
                     static_cast<std::size_t>(dim[1])};
  const std::size_t n = voxel_count(dims);
  if (buf.size() < vox_offset + n * bytes_per_voxel) throw FormatError(name + ": truncated voxel data");

  const float slope = load<float>(buf, kOffSclSlope);
  const float inter = load<float>(buf, kOffSclInter);
  const bool scale = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);
  const double inter_used = std::isfinite(inter) ? inter : 0.0;

  std::vector<float> data(n);
  switch (static_cast<NiftiDatatype>(datatype)) {
    case NiftiDatatype::kUint8: decode<std::uint8_t>(buf, vox_offset, data, scale, slope, inter_used); break;
    case NiftiDatatype::kInt16: decode<std::int16_t>(buf, vox_offset, data, scale, slope, inter_used); break;
    case NiftiDatatype::kFloat32: decode<float>(buf, vox_offset, data, scale, slope, inter_used); break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) throw FormatError(name + ": non-finite value at voxel " + std::to_string(i));
  }

  const Spacing3 spacing{std::abs(pixdim[3]), std::abs(pixdim[2]), std::abs(pixdim[1])};
  for (float s : spacing) {
    if (!(s > 0.0f)) throw FormatError(name + ": non-positive pixdim");
  }
  return Volume3D(dims, spacing, std::move(data), Spacing3{qoffset[2], qoffset[1], qoffset[0]});
}

void write_nifti(const Volume3D& volume, const std::filesystem::path& path) {
  volume.validate();
  const auto& d = volume.dims();
  for (std::size_t a = 0; a < 3; ++a) {
    if (d[a] > 32767) throw ValidationError("volume dimension exceeds NIfTI-1 limit");
  }

  std::vector<char> header(kNiftiVoxOffset, 0);
  store<std::int32_t>(header, kOffSizeofHdr, static_cast<std::int32_t>(kNiftiHeaderSize));
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(d[2]), static_cast<std::int16_t>(d[1]),
                               static_cast<std::int16_t>(d[0]), 1, 1, 1, 1};
  std::memcpy(header.data() + kOffDim, dim, sizeof(dim));
  store<std::int16_t>(header, kOffDatatype, static_cast<std::int16_t>(NiftiDatatype::kFloat32));
  store<std::int16_t>(header, kOffBitpix, 32);
  const auto& vs = volume.voxel_size();
  const float pixdim[8] = {1.0f, vs[2], vs[1], vs[0], 0.0f, 0.0f, 0.0f, 0.0f};
  std::memcpy(header.data() + kOffPixdim, pixdim, sizeof(pixdim));
  store<float>(header, kOffVoxOffset, static_cast<float>(kNiftiVoxOffset));
  store<float>(header, kOffSclSlope, 1.0f);
  store<float>(header, kOffSclInter, 0.0f);
  header[kOffXyztUnits] = 2;  // NIFTI_UNITS_MM
  store<std::int16_t>(header, kOffQformCode, 0);
  const auto& o = volume.origin_offset();
  const float qoffset[3] = {o[2], o[1], o[0]};
  std::memcpy(header.data() + kOffQoffset, qoffset, sizeof(qoffset));
  std::memcpy(header.data() + kOffMagic, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(volume.data().data()),
            static_cast<std::streamsize>(volume.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace brainage
