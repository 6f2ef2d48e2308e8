#pragma once

#include <cstdint>
#include <vector>

#include "chardec/stimulus.hpp"
#include "chardec/volume.hpp"

namespace chardec {

// Ridge regression from five future volumes to the character count of the
// current acquisition, plus onset placement by uniform interval division.
struct RateModel {
  std::vector<double> weights;  // masked voxels * delays
  double intercept = 0.0;
  double lambda = 0.0;
  int delays = 5;
  double cv_r = 0.0;  // held-out correlation of the winning lambda
  std::vector<std::int64_t> voxel_mask;  // voxel indices used; empty = all
};

struct DesignMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;         // row-major
  std::vector<int> dropped;         // acquisition indices without full lookahead
};

// Row t concatenates the flattened volumes at t+1..t+delays; trailing
// acquisitions that would index past the series are dropped. A non-null
// mask restricts each volume to the listed voxel indices.
DesignMatrix assemble_design(const VolumeSeries& volumes, int delays = 5,
                             const std::vector<std::int64_t>* mask = nullptr);

struct RidgeConfig {
  std::vector<double> lambda_grid{1.0, 10.0, 100.0, 1000.0, 10000.0};
  int cv_folds = 5;  // contiguous blocks, respecting temporal order
};

// Closed-form ridge with an unpenalized intercept (columns and targets are
// centered); lambda picked by blocked cross-validated Pearson correlation.
RateModel ridge_fit(const DesignMatrix& design, const std::vector<double>& rates,
                    const RidgeConfig& cfg = {});

// Per-acquisition predictions, clamped to zero then rounded half-up.
// Acquisitions without full lookahead predict 0.
std::vector<int> predict_counts(const VolumeSeries& volumes, const RateModel& model);

// Characters per acquisition interval [t*TR, (t+1)*TR), by midpoint.
std::vector<int> true_counts(const Transcript& transcript, const AcquisitionGrid& grid);

// count n in interval t: onsets at t*TR + (j+1/2)*TR/n.
std::vector<double> place_onsets(const std::vector<int>& counts, const AcquisitionGrid& grid);

}  // namespace chardec
