#include "chardec/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chardec/error.hpp"

namespace chardec {

namespace {

void check_config(const NgramConfig& cfg, int vocab) {
  if (vocab < 1) throw ConfigError("ngram: vocab must be positive");
  if (cfg.order < 1) throw ConfigError("ngram: order must be >= 1");
  if (!(cfg.discount > 0.0) || cfg.discount > 1.0) {
    throw ConfigError("ngram: discount must be in (0, 1]");
  }
  if (cfg.context_cap < 0) throw ConfigError("ngram: context cap must be >= 0");
}

}  // namespace

NgramModel NgramModel::train(const std::vector<std::vector<int>>& corpus, int vocab,
                             const NgramConfig& cfg) {
  check_config(cfg, vocab);

  std::vector<bool> strip(static_cast<std::size_t>(vocab), false);
  for (int id : cfg.strip_ids) {
    if (id >= 0 && id < vocab) strip[static_cast<std::size_t>(id)] = true;
  }

  NgramModel m;
  m.order_ = cfg.order;
  m.vocab_ = vocab;
  m.discount_ = cfg.discount;
  m.cap_ = cfg.context_cap;
  m.char_counts_.assign(static_cast<std::size_t>(vocab), 0);
  const int max_ctx = std::min(cfg.order - 1, cfg.context_cap);
  m.tables_.resize(static_cast<std::size_t>(max_ctx) + 1);

  std::int64_t counted = 0;
  std::vector<int> doc;
  for (const std::vector<int>& raw : corpus) {
    doc.clear();
    for (int c : raw) {
      if (c < 0 || c >= vocab) {
        throw DataError("ngram: char id " + std::to_string(c) + " outside vocab");
      }
      if (!strip[static_cast<std::size_t>(c)]) doc.push_back(c);
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const int c = doc[i];
      m.char_counts_[static_cast<std::size_t>(c)] += 1;
      ++counted;
      const int avail = std::min<int>(max_ctx, static_cast<int>(i));
      for (int L = 0; L <= avail; ++L) {
        std::vector<int> ctx(doc.begin() + static_cast<std::ptrdiff_t>(i) - L,
                             doc.begin() + static_cast<std::ptrdiff_t>(i));
        CtxCounts& e = m.tables_[static_cast<std::size_t>(L)][ctx];
        e.counts[c] += 1;
        e.total += 1;
      }
    }
  }
  if (counted == 0) throw DataError("ngram: corpus is empty after filtering");
  return m;
}

NgramModel NgramModel::from_tables(std::vector<Table> tables, int vocab,
                                   std::vector<std::int64_t> char_counts,
                                   const NgramConfig& cfg) {
  check_config(cfg, vocab);
  const int max_ctx = std::min(cfg.order - 1, cfg.context_cap);
  if (static_cast<int>(tables.size()) != max_ctx + 1) {
    throw DataError("ngram: persisted table count does not match order");
  }
  NgramModel m;
  m.order_ = cfg.order;
  m.vocab_ = vocab;
  m.discount_ = cfg.discount;
  m.cap_ = cfg.context_cap;
  m.tables_ = std::move(tables);
  m.char_counts_ = std::move(char_counts);
  if (static_cast<int>(m.char_counts_.size()) != vocab) {
    throw DataError("ngram: persisted char counts do not match vocab");
  }
  return m;
}

std::vector<bool> NgramModel::allowed_set(int min_count) const {
  std::vector<bool> allowed(static_cast<std::size_t>(vocab_), false);
  for (int c = 0; c < vocab_; ++c) {
    allowed[static_cast<std::size_t>(c)] = char_counts_[static_cast<std::size_t>(c)] >= min_count;
  }
  return allowed;
}

std::vector<double> NgramModel::next_dist(const std::vector<int>& context) const {
  const int max_ctx = static_cast<int>(tables_.size()) - 1;
  const int use = std::min<int>(max_ctx, static_cast<int>(context.size()));

  // interpolate upward from the uniform base; each level replaces the
  // distribution with discounted counts plus its leftover mass times the
  // previous level
  std::vector<double> dist(static_cast<std::size_t>(vocab_), 1.0 / vocab_);
  std::vector<int> ctx;
  for (int L = 0; L <= use; ++L) {
    if (L > 0) {
      ctx.assign(context.end() - L, context.end());
    }
    const Table& table = tables_[static_cast<std::size_t>(L)];
    const auto it = table.find(ctx);
    if (it == table.end() || it->second.total == 0) continue;
    const CtxCounts& e = it->second;
    const double total = static_cast<double>(e.total);
    const double backoff = discount_ * static_cast<double>(e.counts.size()) / total;
    for (double& p : dist) p *= backoff;
    for (const auto& [c, cnt] : e.counts) {
      dist[static_cast<std::size_t>(c)] += (static_cast<double>(cnt) - discount_) / total;
    }
  }
  return dist;
}

double NgramModel::perplexity(const std::vector<int>& seq) const {
  if (seq.empty()) throw DataError("ngram: perplexity of an empty sequence");
  double log_sum = 0.0;
  std::vector<int> ctx;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ctx.assign(seq.begin() + std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - cap_),
               seq.begin() + static_cast<std::ptrdiff_t>(i));
    const std::vector<double> dist = next_dist(ctx);
    log_sum += std::log(dist[static_cast<std::size_t>(seq[i])]);
  }
  return std::exp(-log_sum / static_cast<double>(seq.size()));
}

std::vector<std::pair<int, double>> nucleus_filter(const std::vector<double>& probs, double rho,
                                                   double eta,
                                                   const std::vector<bool>& allowed) {
  if (!(rho > 0.0) || rho > 1.0) throw ConfigError("nucleus: rho must be in (0, 1]");
  if (!(eta > 0.0) || eta > 1.0) throw ConfigError("nucleus: eta must be in (0, 1]");
  if (probs.size() != allowed.size()) throw ShapeError("nucleus: allowed size mismatch");
  if (std::find(allowed.begin(), allowed.end(), true) == allowed.end()) {
    throw ConfigError("nucleus: allowed set is empty");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DataError("nucleus: negative probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-6) throw DataError("nucleus: probabilities do not sum to 1");

  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    const double pl = probs[static_cast<std::size_t>(l)], pr = probs[static_cast<std::size_t>(r)];
    if (pl != pr) return pl > pr;
    return l < r;
  });

  std::size_t prefix = 0;
  double cum = 0.0;
  while (prefix < order.size() && cum < rho) {
    cum += probs[static_cast<std::size_t>(order[prefix])];
    ++prefix;
  }

  const double p_max = probs[static_cast<std::size_t>(order[0])];
  std::vector<std::pair<int, double>> kept;
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < prefix; ++i) {
    const int c = order[i];
    const double p = probs[static_cast<std::size_t>(c)];
    if (p < eta * p_max) continue;
    if (!allowed[static_cast<std::size_t>(c)]) continue;
    kept.emplace_back(c, p);
    kept_mass += p;
  }

  if (kept.empty() || kept_mass <= 0.0) {
    for (int c : order) {
      if (allowed[static_cast<std::size_t>(c)]) {
        return {{c, 1.0}};
      }
    }
  }
  for (auto& [c, p] : kept) p /= kept_mass;
  return kept;
}

}  // namespace chardec
