#include "chardec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chardec/error.hpp"
#include "chardec/stats.hpp"

namespace chardec {

namespace {

// Context vectors with unknown chars mapped to an appended all-zero
// embedding row, so the metric tolerates out-of-vocab ids.
std::vector<std::vector<double>> context_vectors(const std::vector<int>& seq,
                                                 const EmbeddingTable& table, int window,
                                                 double gamma) {
  EmbeddingTable padded;
  padded.vocab = table.vocab + 1;
  padded.dim = table.dim;
  padded.rows = table.rows;
  padded.rows.resize(padded.rows.size() + static_cast<std::size_t>(table.dim), 0.0);

  std::vector<int> mapped(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    mapped[i] = (seq[i] >= 0 && seq[i] < table.vocab) ? seq[i] : table.vocab;
  }
  std::vector<std::vector<double>> out(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out[i] = context_feature_seq(mapped, static_cast<int>(i), padded, window, gamma);
  }
  return out;
}

}  // namespace

IdfTable IdfTable::from_documents(const std::vector<std::vector<int>>& docs, int vocab) {
  if (vocab < 1) throw ConfigError("idf: vocab must be positive");
  IdfTable t;
  t.documents = static_cast<int>(docs.size());
  t.df.assign(static_cast<std::size_t>(vocab), 0);
  std::vector<bool> seen(static_cast<std::size_t>(vocab));
  for (const std::vector<int>& doc : docs) {
    std::fill(seen.begin(), seen.end(), false);
    for (int c : doc) {
      if (c >= 0 && c < vocab) seen[static_cast<std::size_t>(c)] = true;
    }
    for (int c = 0; c < vocab; ++c) {
      if (seen[static_cast<std::size_t>(c)]) t.df[static_cast<std::size_t>(c)] += 1;
    }
  }
  return t;
}

double IdfTable::idf(int char_id) const {
  const double n1 = static_cast<double>(documents) + 1.0;
  if (char_id < 0 || char_id >= static_cast<int>(df.size())) return std::log(n1);
  return std::log(n1 / (static_cast<double>(df[static_cast<std::size_t>(char_id)]) + 1.0));
}

double bleu1(const std::vector<int>& cand, const std::vector<int>& ref) {
  if (cand.empty()) return 0.0;
  std::map<int, int> ref_counts;
  for (int c : ref) ref_counts[c] += 1;
  int clipped = 0;
  for (int c : cand) {
    auto it = ref_counts.find(c);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++clipped;
    }
  }
  const double precision = static_cast<double>(clipped) / static_cast<double>(cand.size());
  const double brevity = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size())));
  return precision * brevity;
}

double meteor(const std::vector<int>& cand, const std::vector<int>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const std::size_t nc = cand.size(), nr = ref.size();
  std::vector<bool> used_c(nc, false), used_r(nr, false);

  // longest-run-first alignment; each accepted run is one chunk
  int matches = 0, chunks = 0;
  for (;;) {
    std::size_t best_len = 0, best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < nc; ++i) {
      if (used_c[i]) continue;
      for (std::size_t j = 0; j < nr; ++j) {
        if (used_r[j]) continue;
        std::size_t len = 0;
        while (i + len < nc && j + len < nr && !used_c[i + len] && !used_r[j + len] &&
               cand[i + len] == ref[j + len]) {
          ++len;
        }
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      used_c[best_i + k] = true;
      used_r[best_j + k] = true;
    }
    matches += static_cast<int>(best_len);
    chunks += 1;
  }
  if (matches == 0) return 0.0;

  const double p = static_cast<double>(matches) / static_cast<double>(nc);
  const double r = static_cast<double>(matches) / static_cast<double>(nr);
  const double f = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  return f * (1.0 - 0.5 * frag * frag * frag);
}

double embed_recall(const std::vector<int>& cand, const std::vector<int>& ref,
                    const EmbeddingTable& table, const IdfTable& idf, int window,
                    double gamma) {
  if (ref.empty()) throw DataError("embed_recall: empty reference");
  if (cand.empty()) return 0.0;
  const std::vector<std::vector<double>> cv = context_vectors(cand, table, window, gamma);
  const std::vector<std::vector<double>> rv = context_vectors(ref, table, window, gamma);

  double num = 0.0, den = 0.0, plain = 0.0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = -1.0;
    for (const std::vector<double>& c : cv) best = std::max(best, cosine(rv[j], c));
    const double w = idf.idf(ref[j]);
    num += w * best;
    den += w;
    plain += best;
  }
  // every-document chars can zero out all idf weights; fall back to the
  // unweighted mean rather than divide by zero
  if (den <= 0.0) return plain / static_cast<double>(ref.size());
  return num / den;
}

namespace {

std::vector<double> weighted_mean_embedding(const std::vector<int>& seq,
                                            const EmbeddingTable& table, const IdfTable& idf,
                                            int window, double gamma) {
  const std::vector<std::vector<double>> vs = context_vectors(seq, table, window, gamma);
  double den = 0.0;
  for (int c : seq) den += idf.idf(c);
  std::vector<double> out(static_cast<std::size_t>(table.dim), 0.0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double w = den > 0.0 ? idf.idf(seq[i]) : 1.0;
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w * vs[i][d];
  }
  const double scale = den > 0.0 ? den : static_cast<double>(seq.size());
  for (double& v : out) v /= scale;
  return out;
}

}  // namespace

double seq_cosine(const std::vector<int>& cand, const std::vector<int>& ref,
                  const EmbeddingTable& table, const IdfTable& idf, int window,
                  double gamma) {
  if (cand.empty() || ref.empty()) throw DataError("seq_cosine: empty sequence");
  return cosine(weighted_mean_embedding(cand, table, idf, window, gamma),
                weighted_mean_embedding(ref, table, idf, window, gamma));
}

WindowedResult windowed_score(const Transcript& cand, const Transcript& ref,
                              const SequenceMetric& metric, const WindowSpec& spec,
                              double duration_s) {
  if (spec.width_s <= 0.0 || spec.stride_s <= 0.0) {
    throw ConfigError("windowed_score: width and stride must be positive");
  }
  const double half = 0.5 * spec.width_s;
  auto gather = [&](const Transcript& t, double center) {
    std::vector<int> chars;
    for (const TranscriptEntry& e : t.entries) {
      const double m = e.midpoint();
      if (m >= center - half && m < center + half) chars.push_back(e.char_id);
    }
    return chars;
  };

  WindowedResult result;
  double sum = 0.0;
  for (int k = 0; k * spec.stride_s < duration_s; ++k) {
    const double center = k * spec.stride_s;
    const std::vector<int> c = gather(cand, center);
    const std::vector<int> r = gather(ref, center);
    if (c.empty() && r.empty()) {
      result.skipped += 1;
      continue;
    }
    const double s = (c.empty() || r.empty()) ? 0.0 : metric(c, r);
    result.windows.push_back({center, s});
    sum += s;
  }
  if (!result.windows.empty()) sum /= static_cast<double>(result.windows.size());
  result.mean = sum;
  return result;
}

double p_value(double observed, const std::vector<double>& null_scores) {
  if (null_scores.empty()) throw DataError("p_value: no null scores");
  std::size_t count = 0;
  for (double s : null_scores) {
    if (s >= observed) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(null_scores.size());
}

}  // namespace chardec
