#include "chardec/volume.hpp"

#include <string>
#include <vector>

#include "chardec/error.hpp"

namespace chardec {

void VolumeSeries::validate() const {
  if (x < 1 || y < 1 || z < 1 || t < 1) throw ShapeError("volume series: non-positive extents");
  if (tr_s <= 0.0) throw DataError("volume series: TR must be positive");
  if (static_cast<std::int64_t>(data.size()) != voxels() * t) {
    throw ShapeError("volume series: payload length does not match extents");
  }
}

void AtlasVolume::validate() const {
  if (x < 1 || y < 1 || z < 1) throw ShapeError("atlas: non-positive extents");
  if (regions < 1) throw DataError("atlas: needs at least one region");
  if (static_cast<std::int64_t>(labels.size()) != voxels()) {
    throw ShapeError("atlas: label count does not match extents");
  }
  std::vector<bool> seen(static_cast<std::size_t>(regions) + 1, false);
  for (int v : labels) {
    if (v < 0 || v > regions) {
      throw DataError("atlas: label " + std::to_string(v) + " outside 0.." +
                      std::to_string(regions));
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
  for (int r = 1; r <= regions; ++r) {
    if (!seen[static_cast<std::size_t>(r)]) {
      throw DataError("atlas: region " + std::to_string(r) + " has no voxels");
    }
  }
}

std::vector<std::int64_t> AtlasVolume::region_voxels(int label) const {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < voxels(); ++i) {
    if (labels[static_cast<std::size_t>(i)] == label) out.push_back(i);
  }
  return out;
}

}  // namespace chardec
