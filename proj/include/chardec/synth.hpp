#pragma once

#include <cstdint>
#include <vector>

#include "chardec/rng.hpp"
#include "chardec/stimulus.hpp"
#include "chardec/tensor.hpp"
#include "chardec/volume.hpp"

namespace chardec {

// Forward model: semantic target rows, mixed per subject, projected into the
// signal regions of the atlas, plus white noise everywhere.
struct SubjectSpec {
  std::uint64_t seed = 0;
  AtlasVolume atlas;
  std::vector<int> signal_regions;
  Tensor mixing;  // [D, D], I + (eps / sqrt(D)) * G
  std::vector<double> hemo_weights = kDefaultDelayWeights;
  double sigma = 0.0;
  double gain = 1.0;
};

// G has seeded standard-normal entries scaled by eps/sqrt(dim), so eps sets
// the operator-norm size of the perturbation at every dim. The mixing matrix
// must stay well conditioned (condition number < 100).
SubjectSpec make_subject(std::uint64_t seed, const AtlasVolume& atlas,
                         const std::vector<int>& signal_regions, double sigma, double eps,
                         int dim, double gain = 1.0);

struct SessionResult {
  VolumeSeries volumes;
  Tensor targets;     // [T, D] noise-free semantic rows
  Tensor projection;  // [signal voxels, D], shared across subjects
  std::vector<std::int64_t> signal_voxels;
  double scale = 1.0;  // RMS normalizer applied to the projected signal
  double rms_signal = 0.0;
  double rms_noise = 0.0;
  double snr = 0.0;  // 0 when the session is noise-free
};

// volumes[t] = gain * scale * P * mixing * target_t on the signal voxels,
// plus N(0, sigma^2) on every voxel. The projection P depends only on the
// atlas and the signal regions, so subjects share it.
SessionResult simulate_session(const Transcript& transcript, const EmbeddingTable& table,
                               const AcquisitionGrid& grid, const SubjectSpec& subject,
                               int session = 0);

// Contiguous flat-index slabs with strictly growing voxel counts; labels
// 1..regions cover every voxel (no background).
AtlasVolume make_slab_atlas(int x, int y, int z, int regions);

// Unit-norm rows; fixed seed pins the table.
EmbeddingTable random_embeddings(int vocab, int dim, std::uint64_t seed);

// First-order chain with skewed random transition rows; higher skew makes
// transitions more deterministic and the text easier to model.
struct MarkovChain {
  int vocab = 0;
  std::vector<double> rows;   // vocab x vocab, row-major
  std::vector<double> start;  // initial distribution

  static MarkovChain random(int vocab, double skew, std::uint64_t seed);
  std::vector<int> sample(int length, Rng& rng) const;
};

// Piecewise-constant character rates: a fresh rate in [0, max_rate] every
// `segment` acquisitions.
std::vector<int> bursty_counts(int acquisitions, int segment, int max_rate,
                               std::uint64_t seed);

// Characters from the chain placed at the uniform subinterval midpoints of
// the given per-acquisition counts; zero-duration entries.
Transcript make_transcript(const std::vector<int>& counts, const AcquisitionGrid& grid,
                           const MarkovChain& chain, std::uint64_t seed);

}  // namespace chardec
