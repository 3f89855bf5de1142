#include "brainage/volume.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "brainage/error.hpp"

namespace brainage {

std::size_t voxel_count(const Extent3& dims) { return dims[0] * dims[1] * dims[2]; }

Volume3D::Volume3D(Extent3 dims, Spacing3 voxel_size, std::vector<float> data, Spacing3 origin_offset)
    : dims_(dims), voxel_size_(voxel_size), origin_offset_(origin_offset), data_(std::move(data)) {
  validate();
}

Volume3D Volume3D::zeros(Extent3 dims, Spacing3 voxel_size) {
  return Volume3D(dims, voxel_size, std::vector<float>(voxel_count(dims), 0.0f));
}

void Volume3D::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (dims_[a] == 0) {
      throw ValidationError("volume dimension " + std::to_string(a) + " is zero");
    }
    if (!(voxel_size_[a] > 0.0f) || !std::isfinite(voxel_size_[a])) {
      throw ValidationError("volume voxel size on axis " + std::to_string(a) + " must be positive");
    }
    if (!std::isfinite(origin_offset_[a])) {
      throw ValidationError("volume origin offset is not finite");
    }
  }
  if (data_.size() != voxel_count(dims_)) {
    std::ostringstream msg;
    msg << "volume data length " << data_.size() << " does not match dims product " << voxel_count(dims_);
    throw ValidationError(msg.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValidationError("volume contains a non-finite value at voxel " + std::to_string(i));
    }
  }
}

bool bitwise_equal(const Volume3D& a, const Volume3D& b) {
  if (a.dims() != b.dims()) return false;
  if (std::memcmp(a.voxel_size().data(), b.voxel_size().data(), sizeof(Spacing3)) != 0) return false;
  if (std::memcmp(a.origin_offset().data(), b.origin_offset().data(), sizeof(Spacing3)) != 0) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

void TargetGrid::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (dims[a] == 0) throw ValidationError("target grid dimension " + std::to_string(a) + " is zero");
    if (!(voxel_size[a] > 0.0f)) {
      throw ValidationError("target grid voxel size on axis " + std::to_string(a) + " must be positive");
    }
  }
}

}  // namespace brainage
