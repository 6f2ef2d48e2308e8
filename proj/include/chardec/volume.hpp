#pragma once

#include <cstdint>
#include <vector>

#include "chardec/stimulus.hpp"

namespace chardec {

// T brain volumes on a fixed acquisition grid. Per-volume layout matches
// Tensor volumes: [x][y][z] with z fastest.
struct VolumeSeries {
  int x = 0, y = 0, z = 0, t = 0;
  double tr_s = 1.5;
  std::vector<double> data;

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(x) * y * z;
  }
  const double* volume(int k) const { return data.data() + k * voxels(); }
  double* volume(int k) { return data.data() + k * voxels(); }
  AcquisitionGrid grid() const { return {tr_s, t}; }

  void validate() const;
};

// Integer region labels over the volume grid; 0 is background, regions are
// 1..regions and each must occur at least once.
struct AtlasVolume {
  int x = 0, y = 0, z = 0;
  int regions = 0;
  std::vector<int> labels;  // [x][y][z], z fastest

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(x) * y * z;
  }
  void validate() const;
  std::vector<std::int64_t> region_voxels(int label) const;
};

}  // namespace chardec
