#include "chardec/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "chardec/error.hpp"
#include "chardec/rate_model.hpp"

namespace chardec {

namespace {

constexpr std::uint64_t kMixingStream = 0x4d495847ull;
constexpr std::uint64_t kProjectionStream = 0x50524f4aull;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953ull;
constexpr std::uint64_t kEmbeddingStream = 0x454d4254ull;
constexpr std::uint64_t kTranscriptStream = 0x54534352ull;

// projection seed from the atlas geometry and the signal region set only,
// never the subject, so every subject shares one P
std::uint64_t projection_seed(const AtlasVolume& atlas, const std::vector<int>& regions) {
  std::uint64_t h = mix_seed(kProjectionStream, static_cast<std::uint64_t>(atlas.x));
  h = mix_seed(h, static_cast<std::uint64_t>(atlas.y));
  h = mix_seed(h, static_cast<std::uint64_t>(atlas.z));
  h = mix_seed(h, static_cast<std::uint64_t>(atlas.regions));
  for (int r : regions) h = mix_seed(h, static_cast<std::uint64_t>(r));
  return h;
}

}  // namespace

SubjectSpec make_subject(std::uint64_t seed, const AtlasVolume& atlas,
                         const std::vector<int>& signal_regions, double sigma, double eps,
                         int dim, double gain) {
  atlas.validate();
  if (signal_regions.empty()) throw ConfigError("make_subject: no signal regions");
  for (int r : signal_regions) {
    if (r < 1 || r > atlas.regions) {
      throw DataError("make_subject: region " + std::to_string(r) + " not in atlas");
    }
  }
  if (sigma < 0.0) throw ConfigError("make_subject: sigma must be non-negative");
  if (eps < 0.0) throw ConfigError("make_subject: perturbation must be non-negative");
  if (dim < 1) throw ConfigError("make_subject: dim must be positive");

  SubjectSpec s;
  s.seed = seed;
  s.atlas = atlas;
  s.signal_regions = signal_regions;
  s.sigma = sigma;
  s.gain = gain;
  s.mixing = Tensor({dim, dim});
  Rng rng(mix_seed(seed, kMixingStream));
  // the 1/sqrt(dim) factor keeps the perturbation's spectral norm near
  // 2*eps at every dim, so conditioning does not degrade with size
  const double scale = eps / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      s.mixing[static_cast<std::int64_t>(i) * dim + j] =
          (i == j ? 1.0 : 0.0) + scale * rng.normal();
    }
  }

  Eigen::Map<const Eigen::MatrixXd> a(s.mixing.data(), dim, dim);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin >= 100.0) {
    throw NumericError("make_subject: mixing matrix is ill-conditioned");
  }
  return s;
}

SessionResult simulate_session(const Transcript& transcript, const EmbeddingTable& table,
                               const AcquisitionGrid& grid, const SubjectSpec& subject,
                               int session) {
  const int dim = subject.mixing.dim(0);
  if (table.dim != dim) throw ShapeError("simulate_session: embedding dim != mixing dim");
  if (grid.count < 1) throw DataError("simulate_session: empty acquisition grid");

  StimulusConfig scfg;
  scfg.delay_weights = subject.hemo_weights;
  SessionResult res;
  res.targets = build_targets(transcript, table, grid, scfg);

  std::vector<std::int64_t> voxels;
  for (int r : subject.signal_regions) {
    const std::vector<std::int64_t> rv = subject.atlas.region_voxels(r);
    voxels.insert(voxels.end(), rv.begin(), rv.end());
  }
  std::sort(voxels.begin(), voxels.end());
  res.signal_voxels = std::move(voxels);
  const std::int64_t n_sig = static_cast<std::int64_t>(res.signal_voxels.size());

  res.projection = Tensor({static_cast<int>(n_sig), dim});
  Rng prng(projection_seed(subject.atlas, subject.signal_regions));
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::int64_t i = 0; i < res.projection.size(); ++i) {
    res.projection[i] = prng.normal() * inv_sqrt_dim;
  }

  const int T = grid.count;
  // raw[t][v] = P (A y_t)
  Tensor raw({T, static_cast<int>(n_sig)});
  std::vector<double> mixed(static_cast<std::size_t>(dim));
  for (int t = 0; t < T; ++t) {
    const double* y = res.targets.data() + static_cast<std::int64_t>(t) * dim;
    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      const double* arow = subject.mixing.data() + static_cast<std::int64_t>(i) * dim;
      for (int j = 0; j < dim; ++j) acc += arow[j] * y[j];
      mixed[static_cast<std::size_t>(i)] = acc;
    }
    double* out = raw.data() + static_cast<std::int64_t>(t) * n_sig;
    for (std::int64_t v = 0; v < n_sig; ++v) {
      double acc = 0.0;
      const double* prow = res.projection.data() + v * dim;
      for (int j = 0; j < dim; ++j) acc += prow[j] * mixed[static_cast<std::size_t>(j)];
      out[v] = acc;
    }
  }

  double sumsq = 0.0;
  for (std::int64_t i = 0; i < raw.size(); ++i) sumsq += raw[i] * raw[i];
  const double rms = std::sqrt(sumsq / static_cast<double>(raw.size()));
  res.scale = rms > 1e-300 ? 1.0 / rms : 1.0;

  res.volumes.x = subject.atlas.x;
  res.volumes.y = subject.atlas.y;
  res.volumes.z = subject.atlas.z;
  res.volumes.t = T;
  res.volumes.tr_s = grid.tr_s;
  res.volumes.data.assign(static_cast<std::size_t>(res.volumes.voxels()) * T, 0.0);

  double sig_sumsq = 0.0, noise_sumsq = 0.0;
  for (int t = 0; t < T; ++t) {
    double* vol = res.volumes.volume(t);
    const double* rawt = raw.data() + static_cast<std::int64_t>(t) * n_sig;
    for (std::int64_t v = 0; v < n_sig; ++v) {
      const double s = subject.gain * res.scale * rawt[v];
      vol[res.signal_voxels[static_cast<std::size_t>(v)]] = s;
      sig_sumsq += s * s;
    }
    if (subject.sigma > 0.0) {
      Rng nrng(mix_seed(subject.seed, kNoiseStream, static_cast<std::uint64_t>(session),
                        static_cast<std::uint64_t>(t)));
      for (std::int64_t v = 0; v < res.volumes.voxels(); ++v) {
        const double e = subject.sigma * nrng.normal();
        vol[v] += e;
        noise_sumsq += e * e;
      }
    }
  }
  res.rms_signal = std::sqrt(sig_sumsq / static_cast<double>(n_sig * T));
  if (subject.sigma > 0.0) {
    res.rms_noise = std::sqrt(noise_sumsq / static_cast<double>(res.volumes.voxels() * T));
    res.snr = res.rms_noise > 0.0 ? res.rms_signal / res.rms_noise : 0.0;
  }
  return res;
}

AtlasVolume make_slab_atlas(int x, int y, int z, int regions) {
  AtlasVolume atlas;
  atlas.x = x;
  atlas.y = y;
  atlas.z = z;
  atlas.regions = regions;
  if (x < 1 || y < 1 || z < 1 || regions < 1) {
    throw ConfigError("make_slab_atlas: non-positive extents");
  }
  const std::int64_t total = atlas.voxels();
  const std::int64_t weight = static_cast<std::int64_t>(regions) * (regions + 1) / 2;
  if (total < weight) {
    throw DataError("make_slab_atlas: too few voxels for strictly growing regions");
  }
  atlas.labels.resize(static_cast<std::size_t>(total));
  std::int64_t prev = 0;
  std::int64_t acc = 0;
  for (int r = 1; r <= regions; ++r) {
    acc += r;
    const std::int64_t hi = r == regions ? total : total * acc / weight;
    for (std::int64_t i = prev; i < hi; ++i) atlas.labels[static_cast<std::size_t>(i)] = r;
    prev = hi;
  }
  atlas.validate();
  return atlas;
}

EmbeddingTable random_embeddings(int vocab, int dim, std::uint64_t seed) {
  if (vocab < 1 || dim < 1) throw ConfigError("random_embeddings: non-positive size");
  EmbeddingTable t;
  t.vocab = vocab;
  t.dim = dim;
  t.rows.resize(static_cast<std::size_t>(vocab) * static_cast<std::size_t>(dim));
  Rng rng(mix_seed(seed, kEmbeddingStream));
  for (int v = 0; v < vocab; ++v) {
    double* row = t.rows.data() + static_cast<std::size_t>(v) * static_cast<std::size_t>(dim);
    double norm = 0.0;
    for (int d = 0; d < dim; ++d) {
      row[d] = rng.normal();
      norm += row[d] * row[d];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      row[0] = 1.0;
      norm = 1.0;
    }
    for (int d = 0; d < dim; ++d) row[d] /= norm;
  }
  return t;
}

MarkovChain MarkovChain::random(int vocab, double skew, std::uint64_t seed) {
  if (vocab < 1) throw ConfigError("markov: vocab must be positive");
  if (skew < 0.0) throw ConfigError("markov: skew must be non-negative");
  MarkovChain c;
  c.vocab = vocab;
  c.rows.resize(static_cast<std::size_t>(vocab) * static_cast<std::size_t>(vocab));
  c.start.assign(static_cast<std::size_t>(vocab), 1.0 / vocab);
  Rng rng(seed);
  for (int i = 0; i < vocab; ++i) {
    double* row = c.rows.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(vocab);
    double total = 0.0;
    for (int j = 0; j < vocab; ++j) {
      row[j] = std::pow(rng.uniform(), skew) + 1e-6;
      total += row[j];
    }
    for (int j = 0; j < vocab; ++j) row[j] /= total;
  }
  return c;
}

namespace {

int categorical(const double* probs, int n, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return n - 1;
}

}  // namespace

std::vector<int> MarkovChain::sample(int length, Rng& rng) const {
  std::vector<int> out(static_cast<std::size_t>(std::max(0, length)));
  int state = categorical(start.data(), vocab, rng);
  for (int i = 0; i < length; ++i) {
    out[static_cast<std::size_t>(i)] = state;
    state = categorical(rows.data() + static_cast<std::size_t>(state) * vocab, vocab, rng);
  }
  return out;
}

std::vector<int> bursty_counts(int acquisitions, int segment, int max_rate,
                               std::uint64_t seed) {
  if (acquisitions < 1 || segment < 1 || max_rate < 0) {
    throw ConfigError("bursty_counts: non-positive sizing");
  }
  std::vector<int> counts(static_cast<std::size_t>(acquisitions), 0);
  Rng rng(seed);
  int rate = 0;
  for (int t = 0; t < acquisitions; ++t) {
    if (t % segment == 0) rate = rng.uniform_int(max_rate + 1);
    counts[static_cast<std::size_t>(t)] = rate;
  }
  return counts;
}

Transcript make_transcript(const std::vector<int>& counts, const AcquisitionGrid& grid,
                           const MarkovChain& chain, std::uint64_t seed) {
  if (static_cast<int>(counts.size()) != grid.count) {
    throw ShapeError("make_transcript: counts do not match the grid");
  }
  const std::vector<double> onsets = place_onsets(counts, grid);
  Rng rng(mix_seed(seed, kTranscriptStream));
  const std::vector<int> chars = chain.sample(static_cast<int>(onsets.size()), rng);
  Transcript tr;
  tr.entries.resize(onsets.size());
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    tr.entries[i] = {chars[i], onsets[i], onsets[i]};
  }
  return tr;
}

}  // namespace chardec
