#include "chardec/beam.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <string>

#include "chardec/error.hpp"
#include "chardec/rate_model.hpp"
#include "chardec/rng.hpp"
#include "chardec/stats.hpp"

namespace chardec {

namespace {

int sample_filtered(const std::vector<std::pair<int, double>>& filtered, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (const auto& [c, p] : filtered) {
    cum += p;
    if (u < cum) return c;
  }
  return filtered.back().first;
}

bool better(const BeamCandidate& a, const BeamCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chars < b.chars;
}

// keep the best-scoring entry per distinct char sequence, then sort and cut
void prune(std::vector<BeamCandidate>& beam, int k) {
  std::map<std::vector<int>, std::size_t> first;
  std::vector<BeamCandidate> unique;
  unique.reserve(beam.size());
  for (BeamCandidate& c : beam) {
    const auto [it, inserted] = first.try_emplace(c.chars, unique.size());
    if (inserted) {
      unique.push_back(std::move(c));
    } else if (c.score > unique[it->second].score) {
      unique[it->second].score = c.score;
    }
  }
  std::sort(unique.begin(), unique.end(), better);
  if (static_cast<int>(unique.size()) > k) unique.resize(static_cast<std::size_t>(k));
  beam = std::move(unique);
}

// onsets of the n characters inside acquisition interval t
std::vector<double> interval_onsets(int t, int n, const AcquisitionGrid& grid) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    out[static_cast<std::size_t>(j)] =
        grid.tr_s * static_cast<double>(t) + (j + 0.5) * grid.tr_s / n;
  }
  return out;
}

}  // namespace

double score_candidate(const std::vector<int>& chars, const std::vector<double>& onsets,
                       const Tensor& z_means, int upto_t, const EmbeddingTable& table,
                       const AcquisitionGrid& grid, const StimulusConfig& scfg) {
  if (chars.size() != onsets.size()) {
    throw ShapeError("score_candidate: char and onset counts differ");
  }
  if (z_means.rank() != 2 || z_means.dim(1) != table.dim) {
    throw ShapeError("score_candidate: encoder rows do not match embedding dim");
  }
  if (upto_t < 0 || upto_t >= z_means.dim(0)) {
    throw ShapeError("score_candidate: acquisition index out of range");
  }

  Transcript cand;
  cand.entries.resize(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    cand.entries[i] = {chars[i], onsets[i], onsets[i]};
  }
  // targets beyond upto_t are never read; a truncated grid avoids building them
  const AcquisitionGrid upto{grid.tr_s, upto_t + 1};
  const Tensor y = build_targets(cand, table, upto, scfg);

  const int dim = table.dim;
  double sum = 0.0;
  int used = 0;
  for (int t = 0; t <= upto_t; ++t) {
    const double* yt = y.data() + static_cast<std::int64_t>(t) * dim;
    bool zero = true;
    for (int d = 0; d < dim && zero; ++d) zero = yt[d] == 0.0;
    if (zero) continue;
    sum += cosine(z_means.data() + static_cast<std::int64_t>(t) * dim, yt,
                  static_cast<std::size_t>(dim));
    used += 1;
  }
  return used > 0 ? sum / used : 0.0;
}

DecodeResult decode(const Tensor& z_means, const std::vector<int>& counts,
                    const NgramModel& lm, const EmbeddingTable& table,
                    const AcquisitionGrid& grid, const DecodeConfig& cfg,
                    const StimulusConfig& scfg) {
  if (cfg.beam < 1 || cfg.expansions < 1) {
    throw ConfigError("decode: beam and expansions must be positive");
  }
  if (static_cast<int>(counts.size()) != grid.count || z_means.dim(0) != grid.count) {
    throw ShapeError("decode: counts, encoder rows, and grid disagree");
  }
  if (z_means.dim(1) != table.dim) {
    throw ShapeError("decode: encoder rows do not match embedding dim");
  }
  for (int n : counts) {
    if (n < 0) throw DataError("decode: negative character count");
  }

  DecodeResult result;
  const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  if (total == 0) {
    std::cerr << "decode: rate model predicts zero characters everywhere; "
                 "returning an empty sequence\n";
    result.empty = true;
    return result;
  }

  const int vocab = lm.vocab();
  std::vector<bool> allowed;
  if (cfg.exhaustive) {
    allowed.assign(static_cast<std::size_t>(vocab), true);
  } else {
    allowed = lm.allowed_set(cfg.min_count);
    if (std::find(allowed.begin(), allowed.end(), true) == allowed.end()) {
      throw ConfigError("decode: no characters pass the vocabulary filter");
    }
  }

  std::vector<BeamCandidate> beam{BeamCandidate{}};
  std::vector<BeamCandidate> extended;
  for (int t = 0; t < grid.count; ++t) {
    const int n = counts[static_cast<std::size_t>(t)];
    if (n == 0) continue;
    const std::vector<double> onsets = interval_onsets(t, n, grid);

    extended.clear();
    if (cfg.exhaustive) {
      double combos = 1.0;
      for (int j = 0; j < n; ++j) combos *= vocab;
      if (combos > 1e6) throw ConfigError("decode: exhaustive expansion too large");
      for (const BeamCandidate& cand : beam) {
        std::vector<int> tuple(static_cast<std::size_t>(n), 0);
        for (;;) {
          BeamCandidate next;
          next.chars = cand.chars;
          next.chars.insert(next.chars.end(), tuple.begin(), tuple.end());
          next.onsets = cand.onsets;
          next.onsets.insert(next.onsets.end(), onsets.begin(), onsets.end());
          next.score = score_candidate(next.chars, next.onsets, z_means, t, table, grid, scfg);
          extended.push_back(std::move(next));

          int pos = n - 1;
          while (pos >= 0 && tuple[static_cast<std::size_t>(pos)] == vocab - 1) {
            tuple[static_cast<std::size_t>(pos)] = 0;
            --pos;
          }
          if (pos < 0) break;
          tuple[static_cast<std::size_t>(pos)] += 1;
        }
      }
    } else {
      for (std::size_t rank = 0; rank < beam.size(); ++rank) {
        const BeamCandidate& cand = beam[rank];
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t),
                         static_cast<std::uint64_t>(rank)));
        for (int m = 0; m < cfg.expansions; ++m) {
          BeamCandidate next;
          next.chars = cand.chars;
          next.onsets = cand.onsets;
          next.onsets.insert(next.onsets.end(), onsets.begin(), onsets.end());
          for (int j = 0; j < n; ++j) {
            const std::vector<double> dist = lm.next_dist(next.chars);
            const auto filtered = nucleus_filter(dist, cfg.rho, cfg.eta, allowed);
            next.chars.push_back(sample_filtered(filtered, rng));
          }
          next.score = score_candidate(next.chars, next.onsets, z_means, t, table, grid, scfg);
          extended.push_back(std::move(next));
        }
      }
    }
    beam = std::move(extended);
    extended = {};
    prune(beam, cfg.beam);
  }

  // trailing acquisitions still carry delayed signal from the last chars, so
  // settle the ranking on the full series
  for (BeamCandidate& cand : beam) {
    cand.score =
        score_candidate(cand.chars, cand.onsets, z_means, grid.count - 1, table, grid, scfg);
  }
  std::sort(beam.begin(), beam.end(), better);

  result.best = beam.front();
  result.transcript.entries.resize(result.best.chars.size());
  for (std::size_t i = 0; i < result.best.chars.size(); ++i) {
    result.transcript.entries[i] = {result.best.chars[i], result.best.onsets[i],
                                    result.best.onsets[i]};
  }
  return result;
}

std::vector<std::vector<int>> generate_nulls(const NgramModel& lm,
                                             const std::vector<int>& counts,
                                             const NullConfig& cfg) {
  if (cfg.reps < 1 || cfg.beam < 1 || cfg.expansions < 1) {
    throw ConfigError("nulls: reps, beam, and expansions must be positive");
  }
  for (int n : counts) {
    if (n < 0) throw DataError("nulls: negative character count");
  }
  const std::vector<bool> allowed = lm.allowed_set(cfg.min_count);
  if (std::find(allowed.begin(), allowed.end(), true) == allowed.end()) {
    throw ConfigError("nulls: no characters pass the vocabulary filter");
  }

  std::vector<std::vector<int>> nulls(static_cast<std::size_t>(cfg.reps));
  for (int rep = 0; rep < cfg.reps; ++rep) {
    std::vector<BeamCandidate> beam{BeamCandidate{}};
    std::vector<BeamCandidate> extended;
    for (std::size_t t = 0; t < counts.size(); ++t) {
      const int n = counts[t];
      if (n == 0) continue;
      extended.clear();
      for (std::size_t rank = 0; rank < beam.size(); ++rank) {
        const BeamCandidate& cand = beam[rank];
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(rep),
                         static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(rank)));
        for (int m = 0; m < cfg.expansions; ++m) {
          BeamCandidate next;
          next.chars = cand.chars;
          for (int j = 0; j < n; ++j) {
            const std::vector<double> dist = lm.next_dist(next.chars);
            const auto filtered = nucleus_filter(dist, cfg.rho, cfg.eta, allowed);
            next.chars.push_back(sample_filtered(filtered, rng));
          }
          next.score = rng.uniform();
          extended.push_back(std::move(next));
        }
      }
      beam = std::move(extended);
      extended = {};
      prune(beam, cfg.beam);
    }
    nulls[static_cast<std::size_t>(rep)] = beam.front().chars;
  }
  return nulls;
}

}  // namespace chardec
