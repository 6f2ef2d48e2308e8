#include "chardec/stimulus.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chardec/error.hpp"

namespace chardec {

const std::vector<double> kDefaultDelayWeights{1.0, 0.7, 0.5, 0.3, 0.1};

void Transcript::validate(int vocab_size) const {
  double prev_onset = -1.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const TranscriptEntry& e = entries[i];
    if (e.offset_s < e.onset_s) {
      throw DataError("transcript entry " + std::to_string(i) + ": offset precedes onset");
    }
    if (e.onset_s <= prev_onset) {
      throw DataError("transcript entry " + std::to_string(i) + ": onsets not strictly increasing");
    }
    if (e.char_id < 0 || e.char_id >= vocab_size) {
      throw DataError("transcript entry " + std::to_string(i) + ": char id " +
                      std::to_string(e.char_id) + " outside vocab of " + std::to_string(vocab_size));
    }
    prev_onset = e.onset_s;
  }
}

double Transcript::duration_s() const {
  double d = 0.0;
  for (const TranscriptEntry& e : entries) d = std::max(d, e.offset_s);
  return d;
}

const double* EmbeddingTable::row(int char_id) const {
  if (char_id < 0 || char_id >= vocab) {
    throw DataError("embedding lookup: char id " + std::to_string(char_id) +
                    " outside vocab of " + std::to_string(vocab));
  }
  return rows.data() + static_cast<std::size_t>(char_id) * static_cast<std::size_t>(dim);
}

double EmbeddingTable::max_row_norm() const {
  double best = 0.0;
  for (int v = 0; v < vocab; ++v) {
    const double* r = rows.data() + static_cast<std::size_t>(v) * dim;
    double n2 = 0.0;
    for (int d = 0; d < dim; ++d) n2 += r[d] * r[d];
    best = std::max(best, std::sqrt(n2));
  }
  return best;
}

namespace {

std::vector<double> weighted_context(const EmbeddingTable& table,
                                     const int* chars, int count, double gamma) {
  // chars[count-1] is the current character (weight 1), older ones decay
  std::vector<double> out(static_cast<std::size_t>(table.dim), 0.0);
  double wsum = 0.0;
  double w = 1.0;
  for (int j = count - 1; j >= 0; --j) {
    const double* e = table.row(chars[j]);
    for (int d = 0; d < table.dim; ++d) out[static_cast<std::size_t>(d)] += w * e[d];
    wsum += w;
    w *= gamma;
  }
  for (double& x : out) x /= wsum;
  return out;
}

}  // namespace

std::vector<double> context_feature(const Transcript& transcript, int i,
                                    const EmbeddingTable& table, int window, double gamma) {
  if (i < 0 || i >= static_cast<int>(transcript.entries.size())) {
    throw DataError("context_feature: index " + std::to_string(i) + " out of transcript");
  }
  const int lo = std::max(0, i - window + 1);
  std::vector<int> chars;
  chars.reserve(static_cast<std::size_t>(i - lo + 1));
  for (int j = lo; j <= i; ++j) chars.push_back(transcript.entries[static_cast<std::size_t>(j)].char_id);
  return weighted_context(table, chars.data(), static_cast<int>(chars.size()), gamma);
}

std::vector<double> context_feature_seq(const std::vector<int>& chars, int i,
                                        const EmbeddingTable& table, int window, double gamma) {
  if (i < 0 || i >= static_cast<int>(chars.size())) {
    throw DataError("context_feature_seq: index out of sequence");
  }
  const int lo = std::max(0, i - window + 1);
  return weighted_context(table, chars.data() + lo, i - lo + 1, gamma);
}

Tensor lanczos_resample(const std::vector<std::pair<double, std::vector<double>>>& samples,
                        const AcquisitionGrid& grid, int lobes) {
  if (grid.tr_s <= 0.0 || grid.count < 1) throw ConfigError("lanczos: invalid acquisition grid");
  if (lobes < 1) throw ConfigError("lanczos: lobes must be >= 1");
  int dim = 0;
  for (const auto& [t, v] : samples) {
    if (!std::isfinite(t)) throw DataError("lanczos: non-finite sample time");
    if (dim == 0) dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim) throw ShapeError("lanczos: ragged sample vectors");
  }

  Tensor out({grid.count, std::max(dim, 1)});
  if (samples.empty() || dim == 0) return out;

  const double a = lobes;
  const double two_fc = 1.0 / grid.tr_s;  // 2 * f_c with f_c = 1/(2 TR)
  auto sinc = [](double x) {
    if (x == 0.0) return 1.0;
    const double px = 3.14159265358979323846 * x;
    return std::sin(px) / px;
  };

  // samples are typically time-sorted; find the support window per grid point
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return samples[l].first < samples[r].first;
  });

  double* o = out.data();
  std::size_t lo = 0;
  for (int k = 0; k < grid.count; ++k) {
    const double tk = grid.time(k);
    const double support = a / two_fc;
    while (lo < order.size() && samples[order[lo]].first <= tk - support) ++lo;

    double* row = o + static_cast<std::int64_t>(k) * dim;
    double wsum = 0.0;
    for (std::size_t idx = lo; idx < order.size(); ++idx) {
      const auto& [ti, vec] = samples[order[idx]];
      if (ti >= tk + support) break;
      const double u = two_fc * (tk - ti);
      if (std::fabs(u) >= a) continue;
      const double w = sinc(u) * sinc(u / a);
      wsum += w;
      for (int d = 0; d < dim; ++d) row[d] += w * vec[static_cast<std::size_t>(d)];
    }
    // renormalize; guard against a vanishing weight sum from cancellation
    if (std::fabs(wsum) > 1e-10) {
      for (int d = 0; d < dim; ++d) row[d] /= wsum;
    } else {
      for (int d = 0; d < dim; ++d) row[d] = 0.0;
    }
  }
  return out;
}

Tensor delayed_sum(const Tensor& resampled, const std::vector<double>& weights) {
  if (resampled.rank() != 2) throw ShapeError("delayed_sum: input must be [T,D]");
  const int T = resampled.dim(0), D = resampled.dim(1);
  Tensor out({T, D});
  const double* in = resampled.data();
  double* o = out.data();
  for (int t = 0; t < T; ++t) {
    double* row = o + static_cast<std::int64_t>(t) * D;
    for (std::size_t d = 0; d < weights.size(); ++d) {
      const int src = t - static_cast<int>(d) - 1;
      if (src < 0) break;
      const double w = weights[d];
      const double* srow = in + static_cast<std::int64_t>(src) * D;
      for (int j = 0; j < D; ++j) row[j] += w * srow[j];
    }
  }
  return out;
}

Tensor delayed_concat(const Tensor& resampled, int delays) {
  if (resampled.rank() != 2) throw ShapeError("delayed_concat: input must be [T,D]");
  const int T = resampled.dim(0), D = resampled.dim(1);
  Tensor out({T, D * delays});
  const double* in = resampled.data();
  double* o = out.data();
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < delays; ++d) {
      const int src = t - d - 1;
      if (src < 0) continue;
      const double* srow = in + static_cast<std::int64_t>(src) * D;
      double* dst = o + (static_cast<std::int64_t>(t) * delays + d) * D;
      std::copy(srow, srow + D, dst);
    }
  }
  return out;
}

Tensor build_targets(const Transcript& transcript, const EmbeddingTable& table,
                     const AcquisitionGrid& grid, const StimulusConfig& cfg) {
  if (transcript.entries.empty()) {
    return Tensor({std::max(grid.count, 1), table.dim});
  }
  std::vector<std::pair<double, std::vector<double>>> samples;
  samples.reserve(transcript.entries.size());
  for (int i = 0; i < static_cast<int>(transcript.entries.size()); ++i) {
    samples.emplace_back(transcript.entries[static_cast<std::size_t>(i)].midpoint(),
                         context_feature(transcript, i, table, cfg.context_window, cfg.context_gamma));
  }
  Tensor resampled = lanczos_resample(samples, grid, cfg.lanczos_lobes);
  return delayed_sum(resampled, cfg.delay_weights);
}

}  // namespace chardec
