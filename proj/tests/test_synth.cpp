#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <vector>

#include "chardec/error.hpp"
#include "chardec/rate_model.hpp"
#include "chardec/rng.hpp"
#include "chardec/synth.hpp"
#include "doctest.h"

using namespace chardec;

namespace {

Transcript dense_transcript(int vocab, int n, double duration, std::uint64_t seed) {
  Rng rng(seed);
  Transcript t;
  for (int i = 0; i < n; ++i) {
    const double onset = duration * (i + 0.5) / n;
    t.entries.push_back({rng.uniform_int(vocab), onset, onset});
  }
  return t;
}

double cond2(const Tensor& m) {
  Eigen::Map<const Eigen::MatrixXd> a(m.data(), m.dim(0), m.dim(1));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues().maxCoeff() / svd.singularValues().minCoeff();
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("make_subject identity and determinism") {
  AtlasVolume atlas = make_slab_atlas(8, 4, 4, 3);
  SubjectSpec plain = make_subject(7, atlas, {1, 2}, 0.0, 0.0, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      CHECK(plain.mixing[i * 5 + j] == (i == j ? 1.0 : 0.0));
    }
  }
  SubjectSpec a = make_subject(7, atlas, {1, 2}, 0.1, 0.05, 5);
  SubjectSpec b = make_subject(7, atlas, {1, 2}, 0.1, 0.05, 5);
  SubjectSpec c = make_subject(8, atlas, {1, 2}, 0.1, 0.05, 5);
  bool same = true, differs = false;
  for (int i = 0; i < 25; ++i) {
    same = same && a.mixing[i] == b.mixing[i];
    differs = differs || a.mixing[i] != c.mixing[i];
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("small perturbations keep the mixing well conditioned") {
  AtlasVolume atlas = make_slab_atlas(8, 4, 4, 2);
  int ok = 0;
  const int trials = 200;
  for (int s = 0; s < trials; ++s) {
    SubjectSpec sub = make_subject(1000 + s, atlas, {1}, 0.0, 0.1, 32);
    if (cond2(sub.mixing) < 2.0) ++ok;
  }
  CHECK(ok >= trials * 99 / 100);
}

TEST_CASE("make_subject rejects bad arguments") {
  AtlasVolume atlas = make_slab_atlas(8, 4, 4, 3);
  CHECK_THROWS_AS(make_subject(1, atlas, {}, 0.0, 0.0, 4), ConfigError);
  CHECK_THROWS_AS(make_subject(1, atlas, {4}, 0.0, 0.0, 4), DataError);
  CHECK_THROWS_AS(make_subject(1, atlas, {1}, -1.0, 0.0, 4), ConfigError);
  CHECK_THROWS_AS(make_subject(1, atlas, {1}, 0.0, -0.1, 4), ConfigError);
  CHECK_THROWS_AS(make_subject(1, atlas, {1}, 0.0, 0.0, 0), ConfigError);
}

TEST_CASE("noise-free empty transcript gives all-zero volumes") {
  AtlasVolume atlas = make_slab_atlas(6, 4, 4, 3);
  SubjectSpec sub = make_subject(3, atlas, {2}, 0.0, 0.05, 4);
  EmbeddingTable table = random_embeddings(5, 4, 11);
  SessionResult res = simulate_session(Transcript{}, table, {1.5, 10}, sub);
  for (double v : res.volumes.data) CHECK(v == 0.0);
  CHECK(res.snr == 0.0);
}

TEST_CASE("noise-free signal stays inside the signal regions") {
  AtlasVolume atlas = make_slab_atlas(6, 4, 4, 3);
  SubjectSpec sub = make_subject(3, atlas, {2}, 0.0, 0.05, 4);
  EmbeddingTable table = random_embeddings(5, 4, 11);
  Transcript tr = dense_transcript(5, 40, 30.0, 21);
  SessionResult res = simulate_session(tr, table, {1.5, 20}, sub);

  std::set<std::int64_t> inside(res.signal_voxels.begin(), res.signal_voxels.end());
  bool any_signal = false;
  for (int t = 0; t < res.volumes.t; ++t) {
    const double* vol = res.volumes.volume(t);
    for (std::int64_t v = 0; v < res.volumes.voxels(); ++v) {
      if (inside.count(v)) {
        any_signal = any_signal || vol[v] != 0.0;
      } else {
        CHECK(vol[v] == 0.0);
      }
    }
  }
  CHECK(any_signal);
}

TEST_CASE("least-squares inversion of the forward map recovers the targets") {
  AtlasVolume atlas = make_slab_atlas(6, 4, 4, 3);
  SubjectSpec sub = make_subject(3, atlas, {1, 3}, 0.0, 0.05, 4, 2.0);
  EmbeddingTable table = random_embeddings(5, 4, 11);
  Transcript tr = dense_transcript(5, 60, 45.0, 21);
  SessionResult res = simulate_session(tr, table, {1.5, 30}, sub);

  const int dim = 4;
  const int n_sig = static_cast<int>(res.signal_voxels.size());
  REQUIRE(n_sig >= dim);
  Eigen::Map<const Eigen::MatrixXd> pt(res.projection.data(), dim, n_sig);
  Eigen::Map<const Eigen::MatrixXd> at(sub.mixing.data(), dim, dim);
  // row-major [n,D] buffers map as transposed column-major views
  Eigen::MatrixXd fwd = sub.gain * res.scale * pt.transpose() * at.transpose();
  auto solver = fwd.colPivHouseholderQr();

  Eigen::VectorXd volume_sig(n_sig);
  for (int t = 0; t < res.volumes.t; ++t) {
    const double* vol = res.volumes.volume(t);
    for (int v = 0; v < n_sig; ++v) volume_sig[v] = vol[res.signal_voxels[v]];
    Eigen::VectorXd y = solver.solve(volume_sig);
    for (int d = 0; d < dim; ++d) {
      CHECK(std::fabs(y[d] - res.targets[t * dim + d]) < 1e-6);
    }
  }
}

TEST_CASE("rms bookkeeping matches the configured gain and noise level") {
  AtlasVolume atlas = make_slab_atlas(8, 8, 8, 3);
  const double gain = 2.0, sigma = 0.5;
  SubjectSpec sub = make_subject(5, atlas, {1, 2, 3}, sigma, 0.05, 6, gain);
  EmbeddingTable table = random_embeddings(8, 6, 13);
  Transcript tr = dense_transcript(8, 800, 600.0, 23);
  SessionResult res = simulate_session(tr, table, {1.5, 400}, sub);

  CHECK(res.rms_signal == doctest::Approx(gain).epsilon(1e-9));
  CHECK(res.snr == doctest::Approx(gain / sigma).epsilon(0.05));
}

TEST_CASE("sessions are bit-identical given the same inputs") {
  AtlasVolume atlas = make_slab_atlas(6, 4, 4, 2);
  SubjectSpec sub = make_subject(9, atlas, {1}, 0.3, 0.05, 4);
  EmbeddingTable table = random_embeddings(5, 4, 11);
  Transcript tr = dense_transcript(5, 30, 30.0, 31);
  SessionResult a = simulate_session(tr, table, {1.5, 20}, sub, 0);
  SessionResult b = simulate_session(tr, table, {1.5, 20}, sub, 0);
  SessionResult c = simulate_session(tr, table, {1.5, 20}, sub, 1);
  CHECK(a.volumes.data == b.volumes.data);
  CHECK(a.volumes.data != c.volumes.data);
}

TEST_CASE("subjects share one projection but not one mixing") {
  AtlasVolume atlas = make_slab_atlas(6, 4, 4, 2);
  EmbeddingTable table = random_embeddings(5, 4, 11);
  Transcript tr = dense_transcript(5, 30, 30.0, 31);
  SubjectSpec s1 = make_subject(1, atlas, {2}, 0.0, 0.05, 4);
  SubjectSpec s2 = make_subject(2, atlas, {2}, 0.0, 0.05, 4);
  SessionResult r1 = simulate_session(tr, table, {1.5, 20}, s1);
  SessionResult r2 = simulate_session(tr, table, {1.5, 20}, s2);
  bool same_projection = true, mixing_differs = false;
  for (std::int64_t i = 0; i < r1.projection.size(); ++i) {
    same_projection = same_projection && r1.projection[i] == r2.projection[i];
  }
  for (std::int64_t i = 0; i < s1.mixing.size(); ++i) {
    mixing_differs = mixing_differs || s1.mixing[i] != s2.mixing[i];
  }
  CHECK(same_projection);
  CHECK(mixing_differs);
}

TEST_CASE("slab atlas has strictly growing regions covering every voxel") {
  AtlasVolume atlas = make_slab_atlas(16, 4, 4, 5);
  std::vector<std::int64_t> sizes(6, 0);
  for (int l : atlas.labels) {
    REQUIRE(l >= 1);
    REQUIRE(l <= 5);
    sizes[static_cast<std::size_t>(l)] += 1;
  }
  for (int r = 2; r <= 5; ++r) CHECK(sizes[r] > sizes[r - 1]);
  CHECK_THROWS_AS(make_slab_atlas(2, 2, 2, 10), DataError);
  CHECK_THROWS_AS(make_slab_atlas(0, 2, 2, 1), ConfigError);
}

TEST_CASE("random embeddings are unit rows pinned by seed") {
  EmbeddingTable a = random_embeddings(6, 5, 42);
  EmbeddingTable b = random_embeddings(6, 5, 42);
  EmbeddingTable c = random_embeddings(6, 5, 43);
  CHECK(a.rows == b.rows);
  CHECK(a.rows != c.rows);
  for (int v = 0; v < 6; ++v) {
    double norm = 0.0;
    for (int d = 0; d < 5; ++d) norm += a.row(v)[d] * a.row(v)[d];
    CHECK(norm == doctest::Approx(1.0));
  }
}

TEST_CASE("markov chain rows are distributions and samples stay in vocab") {
  MarkovChain c = MarkovChain::random(5, 3.0, 17);
  for (int i = 0; i < 5; ++i) {
    double total = 0.0;
    for (int j = 0; j < 5; ++j) {
      CHECK(c.rows[static_cast<std::size_t>(i) * 5 + j] > 0.0);
      total += c.rows[static_cast<std::size_t>(i) * 5 + j];
    }
    CHECK(total == doctest::Approx(1.0));
  }
  Rng rng(5);
  std::vector<int> seq = c.sample(200, rng);
  REQUIRE(seq.size() == 200);
  for (int s : seq) {
    CHECK(s >= 0);
    CHECK(s < 5);
  }
}

TEST_CASE("bursty counts are piecewise constant within segments") {
  std::vector<int> counts = bursty_counts(100, 10, 4, 77);
  REQUIRE(counts.size() == 100);
  for (int t = 0; t < 100; ++t) {
    CHECK(counts[static_cast<std::size_t>(t)] >= 0);
    CHECK(counts[static_cast<std::size_t>(t)] <= 4);
    CHECK(counts[static_cast<std::size_t>(t)] == counts[static_cast<std::size_t>(t - t % 10)]);
  }
  CHECK(bursty_counts(100, 10, 4, 77) == counts);
  CHECK_THROWS_AS(bursty_counts(0, 10, 4, 1), ConfigError);
}

TEST_CASE("generated transcripts reproduce their generating counts") {
  AcquisitionGrid grid{1.5, 40};
  std::vector<int> counts = bursty_counts(40, 8, 3, 99);
  MarkovChain chain = MarkovChain::random(6, 2.0, 3);
  Transcript tr = make_transcript(counts, grid, chain, 55);
  CHECK(true_counts(tr, grid) == counts);
  for (const TranscriptEntry& e : tr.entries) {
    CHECK(e.onset_s == e.offset_s);
    CHECK(e.char_id >= 0);
    CHECK(e.char_id < 6);
  }
  CHECK_THROWS_AS(make_transcript({1, 2}, grid, chain, 55), ShapeError);
}

}  // TEST_SUITE
