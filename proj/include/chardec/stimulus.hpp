#ifndef CHARDEC_STIMULUS_HPP
#define CHARDEC_STIMULUS_HPP

#include <string>
#include <utility>
#include <vector>

#include "chardec/tensor.hpp"

namespace chardec {

struct TranscriptEntry {
  int char_id = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;

  // the pronunciation midpoint is the character's time point
  double midpoint() const { return 0.5 * (onset_s + offset_s); }
};

struct Transcript {
  std::vector<TranscriptEntry> entries;

  void validate(int vocab_size) const;
  double duration_s() const;
};

struct EmbeddingTable {
  int vocab = 0;
  int dim = 0;
  std::vector<double> rows;  // vocab x dim, row-major

  const double* row(int char_id) const;
  double max_row_norm() const;
};

struct AcquisitionGrid {
  double tr_s = 1.5;
  int count = 0;

  double time(int k) const { return tr_s * k; }
  double duration_s() const { return tr_s * count; }
};

// Exponentially weighted mean of the static embeddings of the context window
// (c_{i-5}, ..., c_i); weight gamma^(i-j), renormalized. A short left context
// truncates the window.
std::vector<double> context_feature(const Transcript& transcript, int i,
                                    const EmbeddingTable& table, int window = 6,
                                    double gamma = 0.7);

// Same, for a bare char-id sequence (used by the metric embeddings).
std::vector<double> context_feature_seq(const std::vector<int>& chars, int i,
                                        const EmbeddingTable& table, int window = 6,
                                        double gamma = 0.7);

// Three-lobe Lanczos resampling of irregular (time, vector) samples onto the
// acquisition grid, with per-point weight renormalization. Cutoff is the
// grid Nyquist, f_c = 1/(2 TR). Grid points with no in-support sample get a
// zero row.
Tensor lanczos_resample(const std::vector<std::pair<double, std::vector<double>>>& samples,
                        const AcquisitionGrid& grid, int lobes = 3);

extern const std::vector<double> kDefaultDelayWeights;  // 1.0 0.7 0.5 0.3 0.1

// y_t = sum_d weights[d-1] * resampled[t-d]; out-of-range rows contribute 0.
Tensor delayed_sum(const Tensor& resampled, const std::vector<double>& weights = kDefaultDelayWeights);

// Concatenation variant used by the linear baseline: row t is
// [resampled[t-1], ..., resampled[t-5]], zeros where t-d < 0.
Tensor delayed_concat(const Tensor& resampled, int delays = 5);

struct StimulusConfig {
  int context_window = 6;
  double context_gamma = 0.7;
  int lanczos_lobes = 3;
  std::vector<double> delay_weights = kDefaultDelayWeights;
};

// context features -> Lanczos resample -> delayed weighted sum; one semantic
// target row per acquisition.
Tensor build_targets(const Transcript& transcript, const EmbeddingTable& table,
                     const AcquisitionGrid& grid, const StimulusConfig& cfg = {});

}  // namespace chardec

#endif
