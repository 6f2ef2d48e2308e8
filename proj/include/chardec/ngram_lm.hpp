#pragma once

#include <cstdint>
#include <map>
#include <vector>

namespace chardec {

struct NgramConfig {
  int order = 4;
  double discount = 0.75;    // absolute discount, must be in (0, 1]
  int context_cap = 50;      // longest context ever consulted
  std::vector<int> strip_ids;  // char ids removed before counting (punctuation)
};

// Character n-gram model with interpolated absolute discounting down to a
// uniform base, so every char keeps positive probability and each
// conditional sums to one exactly.
class NgramModel {
 public:
  struct CtxCounts {
    std::map<int, std::int64_t> counts;
    std::int64_t total = 0;
  };
  using Table = std::map<std::vector<int>, CtxCounts>;

  NgramModel() = default;

  static NgramModel train(const std::vector<std::vector<int>>& corpus, int vocab,
                          const NgramConfig& cfg = {});

  int vocab() const { return vocab_; }
  int order() const { return order_; }
  double discount() const { return discount_; }
  int context_cap() const { return cap_; }

  // chars appearing at least min_count times in training
  std::vector<bool> allowed_set(int min_count = 2) const;
  const std::vector<std::int64_t>& char_counts() const { return char_counts_; }

  // p(c | context); uses at most the last min(order-1, context_cap) chars.
  // Unknown context chars match no count table and back off to the unigram.
  std::vector<double> next_dist(const std::vector<int>& context) const;

  double perplexity(const std::vector<int>& seq) const;

  // count tables by context length (0 = unigram); exposed for persistence
  const std::vector<Table>& tables() const { return tables_; }

  // rebuild from persisted counts
  static NgramModel from_tables(std::vector<Table> tables, int vocab,
                                std::vector<std::int64_t> char_counts, const NgramConfig& cfg);

 private:
  int order_ = 0;
  int vocab_ = 0;
  double discount_ = 0.75;
  int cap_ = 50;
  std::vector<Table> tables_;
  std::vector<std::int64_t> char_counts_;
};

// Nucleus filter: keep the smallest descending-probability prefix reaching
// mass rho (ties by ascending char id), drop entries below eta * p_max and
// entries outside `allowed`, renormalize. Falls back to the best allowed
// char when the filter empties.
std::vector<std::pair<int, double>> nucleus_filter(const std::vector<double>& probs, double rho,
                                                   double eta, const std::vector<bool>& allowed);

}  // namespace chardec
