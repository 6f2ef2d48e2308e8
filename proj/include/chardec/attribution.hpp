#pragma once

#include <vector>

#include "chardec/encoder.hpp"
#include "chardec/volume.hpp"

namespace chardec {

// Per-voxel sum over examples of |d(0.5*||mu(x) - y||^2)/d voxel| at the
// deterministic encoder mean; sampling noise never enters the attribution.
Tensor voxel_saliency(const EncoderParams& params, const EncoderDataset& data);

struct RegionScores {
  std::vector<double> scores;  // index r-1 holds region label r
  int subject = -1;
};

// score[r] sums saliency over the voxels labeled r; background label 0 is
// excluded.
RegionScores region_aggregate(const Tensor& saliency, const AtlasVolume& atlas);

struct RankedRegion {
  int label = 0;
  double score = 0.0;
  double relative = 0.0;  // score in units of the n-th ranked score
};

// Descending by score, ties by ascending label.
std::vector<RankedRegion> top_regions(const RegionScores& scores, int n = 10);

// Pearson correlation of average ranks; all-tied input has no defined rank
// order and is an error.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace chardec
