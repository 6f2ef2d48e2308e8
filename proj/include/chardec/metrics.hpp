#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "chardec/stimulus.hpp"

namespace chardec {

// Smoothed inverse document frequency over a reference corpus. Chars never
// seen in any document score ln(N+1), the maximum.
struct IdfTable {
  int documents = 0;
  std::vector<std::int64_t> df;  // documents containing each char id

  static IdfTable from_documents(const std::vector<std::vector<int>>& docs, int vocab);
  double idf(int char_id) const;
};

// Clipped unigram precision times the brevity penalty
// exp(min(0, 1 - |ref|/|cand|)); empty candidate scores 0.
double bleu1(const std::vector<int>& cand, const std::vector<int>& ref);

// Exact-match alignment by repeatedly taking the longest common run of
// still-unmatched positions; F = 10PR/(R+9P) discounted by the
// fragmentation penalty 0.5*(chunks/matches)^3. No matches scores 0.
double meteor(const std::vector<int>& cand, const std::vector<int>& ref);

// Recall of reference positions against their best-matching candidate
// position, idf-weighted, in context-feature embedding space. Chars without
// an embedding row enter as zero vectors and so contribute zero similarity.
double embed_recall(const std::vector<int>& cand, const std::vector<int>& ref,
                    const EmbeddingTable& table, const IdfTable& idf, int window = 6,
                    double gamma = 0.7);

// Cosine between the idf-weighted means of the two sequences' context
// feature vectors; a zero-norm side scores 0.
double seq_cosine(const std::vector<int>& cand, const std::vector<int>& ref,
                  const EmbeddingTable& table, const IdfTable& idf, int window = 6,
                  double gamma = 0.7);

struct WindowSpec {
  double width_s = 20.0;
  double stride_s = 1.0;
};

struct WindowScore {
  double center_s = 0.0;
  double score = 0.0;
};

struct WindowedResult {
  double mean = 0.0;
  std::vector<WindowScore> windows;  // scored windows only
  int skipped = 0;                   // windows empty on both sides
};

using SequenceMetric = std::function<double(const std::vector<int>&, const std::vector<int>&)>;

// Slide centers at multiples of the stride below duration_s; each window
// holds the chars whose midpoints fall in [center - w/2, center + w/2).
// Both sides empty skips the window; one side empty scores 0 without
// consulting the metric.
WindowedResult windowed_score(const Transcript& cand, const Transcript& ref,
                              const SequenceMetric& metric, const WindowSpec& spec,
                              double duration_s);

// One-sided non-parametric test: fraction of nulls >= observed.
double p_value(double observed, const std::vector<double>& null_scores);

}  // namespace chardec
