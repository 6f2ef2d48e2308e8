#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chardec/beam.hpp"
#include "chardec/config.hpp"
#include "chardec/encoder.hpp"
#include "chardec/metrics.hpp"
#include "chardec/ngram_lm.hpp"
#include "chardec/rate_model.hpp"
#include "chardec/synth.hpp"
#include "chardec/volume.hpp"

namespace chardec {

// ---- trained-model persistence in the checkpoint container ----

void save_encoder(const std::string& path, const EncoderParams& params);
EncoderParams load_encoder(const std::string& path);

void save_rate_model(const std::string& path, const RateModel& model);
RateModel load_rate_model(const std::string& path);

void save_lm(const std::string& path, const NgramModel& lm);
NgramModel load_lm(const std::string& path);

// ---- stage composition ----

// Deterministic per-acquisition encoder means, [T, D].
Tensor encode_series(const EncoderParams& params, const VolumeSeries& volumes);

// Owns the target rows; the sample views point into `volumes` and into
// `targets`, so both this struct and the series must outlive training.
struct SessionDataset {
  Tensor targets;  // [T, D]
  EncoderDataset view;
};
SessionDataset make_dataset(const VolumeSeries& volumes, const Transcript& transcript,
                            const EmbeddingTable& table, const StimulusConfig& scfg = {});
SessionDataset make_dataset(const VolumeSeries& volumes, Tensor targets);

// ---- synthetic benchmark shared by the CLI protocol driver and the tests ----

struct BenchmarkConfig {
  std::uint64_t seed = 0;

  int vocab = 50;
  int dim = 8;
  std::array<int, 3> atlas_dims{16, 16, 16};
  int regions = 10;
  std::vector<int> signal_regions{7};
  double tr_s = 1.5;
  int train_acquisitions = 1080;
  int test_acquisitions = 120;
  int rate_segment = 8;
  int max_rate = 2;
  double chain_skew = 3.0;
  double sigma = 0.1;
  double eps = 0.1;
  double gain = 1.0;

  int lm_order = 3;
  int lm_docs = 4;
  int lm_doc_len = 4000;
  int idf_chunk = 50;  // corpus split size for document-frequency weights

  std::array<int, 3> kernels{3, 3, 1};
  std::array<int, 3> filters{6, 12, 32};

  TrainConfig train;
  DecodeConfig decode;
  NullConfig nulls;

  EncoderConfig encoder_config() const;
};

// Benchmark defaults sized for a desktop CPU: the training schedule here is
// what the protocol commands and the end-to-end tests run with.
BenchmarkConfig default_benchmark();

// Smaller world for the multi-run protocols (cross-subject, ablations).
BenchmarkConfig small_benchmark();

struct World {
  BenchmarkConfig cfg;
  AtlasVolume atlas;
  EmbeddingTable table;
  MarkovChain chain;
  std::vector<std::vector<int>> corpus;
  NgramModel lm;
  IdfTable idf;
};
World make_world(const BenchmarkConfig& cfg);

struct SessionData {
  std::vector<int> counts;
  Transcript transcript;
  SessionResult session;
};
SessionData make_stimulus_session(const World& world, const SubjectSpec& subject,
                                  std::uint64_t stimulus_seed, int acquisitions,
                                  int session_index);

struct RunOutcome {
  std::vector<int> truth;
  std::vector<int> decoded;
  double decode_score = 0.0;  // sequence cosine between decoded and true chars
  double null_mean = 0.0;
  double p = 1.0;
  double rate_cv_r = 0.0;
  double rate_test_r = 0.0;
  double final_kl = 0.0;
  double final_align = 0.0;
  double test_cos = 0.0;  // mean cosine between test z-means and true targets
  int pred_chars = 0;     // total characters the rate model paced the beam with
  bool decode_empty = false;
};

// One subject, train session + held-out test session.
RunOutcome run_within(const World& world, std::uint64_t run_seed);

// Train encoder and rate model on `train_subjects` subjects sharing one
// stimulus, then decode a held-out subject on a fresh stimulus.
RunOutcome run_cross(const World& world, int train_subjects, std::uint64_t run_seed);

// ---- run manifests ----

// Everything needed to reproduce a run bit-identically: the full config,
// every seed, and digests of every input and output file. No timestamps.
struct Manifest {
  std::string command;
  RunConfig config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, double> params;        // numeric knobs outside RunConfig
  std::map<std::string, std::string> inputs;   // path tail -> digest
  std::map<std::string, std::string> outputs;  // path tail -> digest
  std::map<std::string, double> metrics;

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

}  // namespace chardec
