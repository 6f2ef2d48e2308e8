#pragma once

#include <cstdint>
#include <vector>

#include "chardec/ngram_lm.hpp"
#include "chardec/stimulus.hpp"
#include "chardec/tensor.hpp"

namespace chardec {

struct DecodeConfig {
  int beam = 200;
  double rho = 0.90;
  double eta = 0.1;
  int expansions = 8;  // sampled continuations per candidate per acquisition
  int min_count = 2;   // vocabulary filter passed to the nucleus sampler
  bool exhaustive = false;  // expand with every possible tuple (oracle mode)
  std::uint64_t seed = 0;
};

struct BeamCandidate {
  std::vector<int> chars;
  std::vector<double> onsets;
  double score = 0.0;
};

// Mean cosine between encoder mean rows and the candidate's semantic target
// rows over acquisitions 0..upto_t; all-zero target rows are skipped so the
// cold-start rows do not drag the mean.
double score_candidate(const std::vector<int>& chars, const std::vector<double>& onsets,
                       const Tensor& z_means, int upto_t, const EmbeddingTable& table,
                       const AcquisitionGrid& grid, const StimulusConfig& scfg = {});

struct DecodeResult {
  BeamCandidate best;
  Transcript transcript;
  bool empty = false;  // the rate model predicted zero characters everywhere
};

// Rate-paced beam search: at each acquisition every candidate grows by that
// acquisition's predicted count, sampled through the nucleus-filtered LM
// (or exhaustively in oracle mode), then the beam is rescored against the
// encoder means and pruned to `beam` distinct candidates. Final ranking
// rescores over the whole series; ties break lexicographically.
DecodeResult decode(const Tensor& z_means, const std::vector<int>& counts,
                    const NgramModel& lm, const EmbeddingTable& table,
                    const AcquisitionGrid& grid, const DecodeConfig& cfg = {},
                    const StimulusConfig& scfg = {});

struct NullConfig {
  int reps = 200;
  int beam = 10;
  int expansions = 8;
  double rho = 0.90;
  double eta = 0.1;
  int min_count = 2;
  std::uint64_t seed = 0;
};

// Brain-blind control: identical pacing and beam mechanics, but candidate
// scores are uniform random draws and no encoder output is consulted. Every
// null sequence has exactly sum(counts) characters.
std::vector<std::vector<int>> generate_nulls(const NgramModel& lm,
                                             const std::vector<int>& counts,
                                             const NullConfig& cfg = {});

}  // namespace chardec
