#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "chardec/error.hpp"
#include "chardec/ngram_lm.hpp"
#include "chardec/rng.hpp"
#include "doctest.h"

using namespace chardec;

namespace {

std::vector<int> repeat_pattern(const std::vector<int>& pattern, int times) {
  std::vector<int> out;
  for (int i = 0; i < times; ++i) out.insert(out.end(), pattern.begin(), pattern.end());
  return out;
}

double dist_sum(const std::vector<double>& d) {
  return std::accumulate(d.begin(), d.end(), 0.0);
}

std::set<int> kept_chars(const std::vector<std::pair<int, double>>& filtered) {
  std::set<int> out;
  for (const auto& [c, p] : filtered) out.insert(c);
  return out;
}

}  // namespace

TEST_SUITE("ngram") {
  TEST_CASE("training rejects bad inputs") {
    CHECK_THROWS_AS(NgramModel::train({}, 4), DataError);
    CHECK_THROWS_AS(NgramModel::train({{}}, 4), DataError);
    CHECK_THROWS_AS(NgramModel::train({{0}}, 0), ConfigError);
    CHECK_THROWS_AS(NgramModel::train({{5}}, 4), DataError);
    NgramConfig bad;
    bad.discount = 0.0;
    CHECK_THROWS_AS(NgramModel::train({{0}}, 2, bad), ConfigError);
    bad.discount = 1.5;
    CHECK_THROWS_AS(NgramModel::train({{0}}, 2, bad), ConfigError);
    NgramConfig order0;
    order0.order = 0;
    CHECK_THROWS_AS(NgramModel::train({{0}}, 2, order0), ConfigError);
  }

  TEST_CASE("alternating corpus makes the bigram nearly deterministic") {
    NgramConfig cfg;
    cfg.order = 2;
    const std::vector<int> ab = repeat_pattern({0, 1}, 50);
    NgramModel m = NgramModel::train({ab}, 2, cfg);
    const std::vector<double> after_a = m.next_dist({0});
    CHECK(after_a[1] > 0.9);
    CHECK(after_a[0] + after_a[1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("single-char corpus concentrates the unigram") {
    NgramModel m = NgramModel::train({std::vector<int>(100, 2)}, 5);
    const std::vector<double> uni = m.next_dist({});
    CHECK(uni[2] > 0.99);
    CHECK(dist_sum(uni) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("strip filter removes ids before counting") {
    NgramConfig cfg;
    cfg.strip_ids = {1};
    // with char 1 stripped, 0 and 2 become adjacent
    NgramModel m = NgramModel::train({{0, 1, 2, 0, 1, 2, 0, 1, 2}}, 3, cfg);
    CHECK(m.char_counts()[1] == 0);
    const std::vector<double> after_0 = m.next_dist({0});
    CHECK(after_0[2] > after_0[1]);
  }

  TEST_CASE("trained model beats the uniform distribution on held-out text") {
    // markov source: heavy self-transition; train and held-out draws share it
    const int V = 6;
    Rng rng(123);
    auto sample_chain = [&](int len) {
      std::vector<int> seq(static_cast<std::size_t>(len));
      int state = rng.uniform_int(V);
      for (int i = 0; i < len; ++i) {
        if (rng.uniform() < 0.7) {
          seq[static_cast<std::size_t>(i)] = state;
        } else {
          state = rng.uniform_int(V);
          seq[static_cast<std::size_t>(i)] = state;
        }
      }
      return seq;
    };
    NgramModel m = NgramModel::train({sample_chain(4000)}, V);
    const double ppl = m.perplexity(sample_chain(800));
    CHECK(ppl < static_cast<double>(V));
    CHECK(ppl > 1.0);
  }

  TEST_CASE("empty context gives the smoothed unigram") {
    NgramModel m = NgramModel::train({{0, 1, 1, 2}}, 4);
    const std::vector<double> uni = m.next_dist({});
    // counts 1,2,1 over total 4, delta .75: p(1) = 1.25/4 + backoff/4
    const double backoff = 0.75 * 3.0 / 4.0;
    CHECK(uni[1] == doctest::Approx(1.25 / 4.0 + backoff * 0.25));
    CHECK(uni[3] == doctest::Approx(backoff * 0.25));
    CHECK(dist_sum(uni) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("context beyond the cap is truncated") {
    NgramConfig cfg;
    cfg.order = 6;
    cfg.context_cap = 2;
    const std::vector<int> corpus = repeat_pattern({0, 1, 2, 3}, 40);
    NgramModel m = NgramModel::train({corpus}, 4, cfg);
    const std::vector<int> long_ctx{3, 0, 1, 2, 3, 0, 1};
    const std::vector<int> short_ctx{0, 1};
    CHECK(m.next_dist(long_ctx) == m.next_dist(short_ctx));
  }

  TEST_CASE("unknown context chars back off instead of failing") {
    NgramModel m = NgramModel::train({repeat_pattern({0, 1}, 30)}, 3);
    const std::vector<double> with_unknown = m.next_dist({2, 0});
    // char 2 never occurs, so only the suffix {0} can match
    CHECK(with_unknown == m.next_dist({0}));
    CHECK(dist_sum(m.next_dist({7, 9})) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("conditionals normalize over random contexts") {
    Rng rng(9);
    std::vector<int> corpus(3000);
    for (int& c : corpus) c = rng.uniform_int(12);
    NgramModel m = NgramModel::train({corpus}, 12);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<int> ctx(static_cast<std::size_t>(rng.uniform_int(5)));
      for (int& c : ctx) c = rng.uniform_int(12);
      const std::vector<double> d = m.next_dist(ctx);
      CHECK(std::fabs(dist_sum(d) - 1.0) < 1e-9);
      for (double p : d) CHECK(p > 0.0);
    }
  }

  TEST_CASE("counting separate documents matches their concatenated tables") {
    Rng rng(77);
    std::vector<int> doc_a(400), doc_b(300);
    for (int& c : doc_a) c = rng.uniform_int(5);
    for (int& c : doc_b) c = rng.uniform_int(5);
    NgramModel joint = NgramModel::train({doc_a, doc_b}, 5);
    NgramModel only_a = NgramModel::train({doc_a}, 5);
    NgramModel only_b = NgramModel::train({doc_b}, 5);

    for (std::size_t L = 0; L < joint.tables().size(); ++L) {
      NgramModel::Table merged = only_a.tables()[L];
      for (const auto& [ctx, entry] : only_b.tables()[L]) {
        NgramModel::CtxCounts& e = merged[ctx];
        for (const auto& [c, n] : entry.counts) e.counts[c] += n;
        e.total += entry.total;
      }
      const NgramModel::Table& expect = joint.tables()[L];
      REQUIRE(merged.size() == expect.size());
      for (const auto& [ctx, entry] : expect) {
        const auto it = merged.find(ctx);
        REQUIRE(it != merged.end());
        CHECK(it->second.total == entry.total);
        CHECK(it->second.counts == entry.counts);
      }
    }
  }

  TEST_CASE("persisted tables rebuild an identical model") {
    Rng rng(13);
    std::vector<int> corpus(500);
    for (int& c : corpus) c = rng.uniform_int(6);
    NgramModel m = NgramModel::train({corpus}, 6);
    NgramConfig cfg;
    NgramModel copy = NgramModel::from_tables(m.tables(), 6, m.char_counts(), cfg);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> ctx(static_cast<std::size_t>(rng.uniform_int(4)));
      for (int& c : ctx) c = rng.uniform_int(6);
      CHECK(m.next_dist(ctx) == copy.next_dist(ctx));
    }
    CHECK_THROWS_AS(NgramModel::from_tables(m.tables(), 4, m.char_counts(), cfg), DataError);
  }

  TEST_CASE("allowed set keeps chars seen at least twice") {
    NgramModel m = NgramModel::train({{0, 0, 1, 2, 2, 2}}, 4);
    const std::vector<bool> allowed = m.allowed_set(2);
    CHECK(allowed == std::vector<bool>{true, false, true, false});
  }

  TEST_CASE("nucleus: worked four-char example") {
    const std::vector<double> probs{0.5, 0.3, 0.15, 0.05};
    const std::vector<bool> all(4, true);
    const auto kept = nucleus_filter(probs, 0.9, 0.1, all);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].first == 0);
    CHECK(kept[0].second == doctest::Approx(0.5263).epsilon(1e-3));
    CHECK(kept[1].first == 1);
    CHECK(kept[1].second == doctest::Approx(0.3158).epsilon(1e-3));
    CHECK(kept[2].first == 2);
    CHECK(kept[2].second == doctest::Approx(0.1579).epsilon(1e-3));
  }

  TEST_CASE("nucleus: point mass survives alone") {
    std::vector<double> probs(5, 0.0);
    probs[3] = 1.0;
    const auto kept = nucleus_filter(probs, 0.9, 0.1, std::vector<bool>(5, true));
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].first == 3);
    CHECK(kept[0].second == doctest::Approx(1.0));
  }

  TEST_CASE("nucleus: uniform ties break by ascending char id") {
    const std::vector<double> probs(10, 0.1);
    const auto kept = nucleus_filter(probs, 0.35, 0.1, std::vector<bool>(10, true));
    REQUIRE(kept.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(kept[static_cast<std::size_t>(i)].first == i);
      CHECK(kept[static_cast<std::size_t>(i)].second == doctest::Approx(0.25));
    }
  }

  TEST_CASE("nucleus: eta drops the long tail inside the prefix") {
    const std::vector<double> probs{0.6, 0.35, 0.05};
    // prefix needs all of 0 and 1 (0.95 >= 0.9); 0.05 < 0.5*0.6 never enters
    const auto kept = nucleus_filter(probs, 0.99, 0.5, std::vector<bool>(3, true));
    const std::set<int> chars = kept_chars(kept);
    CHECK(chars == std::set<int>{0, 1});
  }

  TEST_CASE("nucleus: disallowed argmax falls back to best allowed char") {
    const std::vector<double> probs{0.7, 0.2, 0.1};
    std::vector<bool> allowed{false, false, true};
    const auto kept = nucleus_filter(probs, 0.5, 0.9, allowed);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].first == 2);
    CHECK(kept[0].second == doctest::Approx(1.0));
  }

  TEST_CASE("nucleus: invalid parameters rejected") {
    const std::vector<double> probs{0.5, 0.5};
    const std::vector<bool> all(2, true);
    CHECK_THROWS_AS(nucleus_filter(probs, 0.0, 0.1, all), ConfigError);
    CHECK_THROWS_AS(nucleus_filter(probs, 1.2, 0.1, all), ConfigError);
    CHECK_THROWS_AS(nucleus_filter(probs, 0.9, 0.0, all), ConfigError);
    CHECK_THROWS_AS(nucleus_filter(probs, 0.9, 0.1, std::vector<bool>(2, false)), ConfigError);
    CHECK_THROWS_AS(nucleus_filter({0.5, 0.2}, 0.9, 0.1, all), DataError);
    CHECK_THROWS_AS(nucleus_filter(probs, 0.9, 0.1, std::vector<bool>(3, true)), ShapeError);
  }

  TEST_CASE("nucleus: growing rho or shrinking eta never removes a char") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 3 + rng.uniform_int(8);
      std::vector<double> probs(static_cast<std::size_t>(n));
      double total = 0.0;
      for (double& p : probs) {
        p = rng.uniform() + 1e-4;
        total += p;
      }
      for (double& p : probs) p /= total;
      std::vector<bool> allowed(static_cast<std::size_t>(n));
      bool any = false;
      for (std::size_t i = 0; i < allowed.size(); ++i) {
        allowed[i] = rng.uniform() < 0.8;
        any = any || allowed[i];
      }
      if (!any) allowed[0] = true;

      const double rho_lo = rng.uniform(0.2, 0.7);
      const double rho_hi = rng.uniform(rho_lo, 1.0);
      const double eta_hi = rng.uniform(0.2, 0.9);
      const double eta_lo = rng.uniform(0.01, eta_hi);

      const std::set<int> narrow = kept_chars(nucleus_filter(probs, rho_lo, eta_hi, allowed));
      const std::set<int> wide_rho = kept_chars(nucleus_filter(probs, rho_hi, eta_hi, allowed));
      const std::set<int> wide_eta = kept_chars(nucleus_filter(probs, rho_lo, eta_lo, allowed));
      for (int c : narrow) {
        CHECK(wide_rho.count(c) == 1);
        CHECK(wide_eta.count(c) == 1);
      }
    }
  }

  TEST_CASE("filter output is a proper distribution over allowed chars") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 2 + rng.uniform_int(10);
      std::vector<double> probs(static_cast<std::size_t>(n));
      double total = 0.0;
      for (double& p : probs) {
        p = rng.uniform();
        total += p;
      }
      for (double& p : probs) p /= total;
      std::vector<bool> allowed(static_cast<std::size_t>(n), false);
      allowed[static_cast<std::size_t>(rng.uniform_int(n))] = true;
      allowed[static_cast<std::size_t>(rng.uniform_int(n))] = true;

      const auto kept = nucleus_filter(probs, rng.uniform(0.1, 1.0), rng.uniform(0.05, 1.0), allowed);
      REQUIRE(!kept.empty());
      double mass = 0.0;
      for (const auto& [c, p] : kept) {
        CHECK(allowed[static_cast<std::size_t>(c)]);
        CHECK(p > 0.0);
        mass += p;
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}
