#include <cmath>
#include <numeric>
#include <vector>

#include "chardec/attribution.hpp"
#include "chardec/error.hpp"
#include "chardec/rng.hpp"
#include "doctest.h"

using namespace chardec;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.input_dims = {6, 6, 6};
  cfg.kernel_edges = {3, 1, 1};
  cfg.filters = {2, 2, 3};
  cfg.latent_dim = 2;
  return cfg;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double alignment_loss(const std::vector<double>& volume, const std::vector<double>& target,
                      const EncoderParams& params) {
  const auto& d = params.config.input_dims;
  Tensor vol({d[0], d[1], d[2]});
  std::copy(volume.begin(), volume.end(), vol.data());
  EncodeResult res = encode(vol, params, EncodeMode::kMean, nullptr);
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = res.z[i] - target[i];
    loss += 0.5 * r * r;
  }
  return loss;
}

}  // namespace

TEST_SUITE("attribution") {

TEST_CASE("saliency matches central finite differences per voxel") {
  EncoderConfig cfg = small_config();
  EncoderParams params = EncoderParams::init(cfg, 21);
  std::vector<double> volume = random_values(216, 4);
  std::vector<double> target = random_values(2, 5);

  EncoderDataset data;
  data.volume_dims = cfg.input_dims;
  data.target_dim = 2;
  data.samples.push_back({volume.data(), target.data()});
  Tensor sal = voxel_saliency(params, data);
  REQUIRE(sal.size() == 216);

  const double h = 1e-5;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    std::vector<double> plus = volume, minus = volume;
    plus[i] += h;
    minus[i] -= h;
    const double fd =
        (alignment_loss(plus, target, params) - alignment_loss(minus, target, params)) /
        (2.0 * h);
    CHECK(std::fabs(sal[static_cast<std::int64_t>(i)] - std::fabs(fd)) < 1e-3);
  }
}

TEST_CASE("saliency sums absolute per-example gradients") {
  EncoderConfig cfg = small_config();
  EncoderParams params = EncoderParams::init(cfg, 33);
  std::vector<double> v1 = random_values(216, 6);
  std::vector<double> v2 = random_values(216, 7);
  std::vector<double> t1 = random_values(2, 8);
  std::vector<double> t2 = random_values(2, 9);

  EncoderDataset both, first, second;
  both.volume_dims = first.volume_dims = second.volume_dims = cfg.input_dims;
  both.target_dim = first.target_dim = second.target_dim = 2;
  first.samples.push_back({v1.data(), t1.data()});
  second.samples.push_back({v2.data(), t2.data()});
  both.samples = {first.samples[0], second.samples[0]};

  Tensor s1 = voxel_saliency(params, first);
  Tensor s2 = voxel_saliency(params, second);
  Tensor s12 = voxel_saliency(params, both);
  for (std::int64_t i = 0; i < s12.size(); ++i) {
    CHECK(s12[i] == doctest::Approx(s1[i] + s2[i]));
  }
}

TEST_CASE("dead first layer gives zero saliency with a warning") {
  EncoderConfig cfg = small_config();
  EncoderParams params = EncoderParams::init(cfg, 21);
  params.conv1.fill(0.0);
  std::vector<double> volume = random_values(216, 4);
  std::vector<double> target = random_values(2, 5);
  EncoderDataset data;
  data.volume_dims = cfg.input_dims;
  data.target_dim = 2;
  data.samples.push_back({volume.data(), target.data()});
  Tensor sal = voxel_saliency(params, data);
  for (std::int64_t i = 0; i < sal.size(); ++i) CHECK(sal[i] == 0.0);
}

TEST_CASE("saliency validates its dataset") {
  EncoderConfig cfg = small_config();
  EncoderParams params = EncoderParams::init(cfg, 21);
  EncoderDataset empty;
  empty.volume_dims = cfg.input_dims;
  empty.target_dim = 2;
  CHECK_THROWS_AS(voxel_saliency(params, empty), DataError);

  std::vector<double> volume = random_values(216, 4);
  std::vector<double> target = random_values(3, 5);
  EncoderDataset bad;
  bad.volume_dims = cfg.input_dims;
  bad.target_dim = 3;  // encoder emits 2 dims
  bad.samples.push_back({volume.data(), target.data()});
  CHECK_THROWS_AS(voxel_saliency(params, bad), ShapeError);
}

TEST_CASE("region aggregation by label with background excluded") {
  AtlasVolume atlas;
  atlas.x = 2;
  atlas.y = 2;
  atlas.z = 2;
  atlas.regions = 3;
  atlas.labels = {0, 1, 1, 2, 2, 2, 3, 0};

  Tensor uniform({2, 2, 2}, 1.0);
  RegionScores counts = region_aggregate(uniform, atlas);
  REQUIRE(counts.scores.size() == 3);
  CHECK(counts.scores[0] == doctest::Approx(2.0));
  CHECK(counts.scores[1] == doctest::Approx(3.0));
  CHECK(counts.scores[2] == doctest::Approx(1.0));

  Tensor localized({2, 2, 2});
  localized[6] = 5.0;  // the only voxel labeled 3
  RegionScores only3 = region_aggregate(localized, atlas);
  CHECK(only3.scores[0] == 0.0);
  CHECK(only3.scores[1] == 0.0);
  CHECK(only3.scores[2] == doctest::Approx(5.0));
}

TEST_CASE("region aggregation conserves labeled mass and validates input") {
  AtlasVolume atlas;
  atlas.x = 2;
  atlas.y = 2;
  atlas.z = 2;
  atlas.regions = 2;
  atlas.labels = {1, 2, 1, 2, 0, 1, 2, 1};

  Tensor sal({2, 2, 2});
  Rng rng(3);
  for (std::int64_t i = 0; i < sal.size(); ++i) sal[i] = std::fabs(rng.normal());
  RegionScores scores = region_aggregate(sal, atlas);
  double labeled = 0.0;
  for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
    if (atlas.labels[i] > 0) labeled += sal[static_cast<std::int64_t>(i)];
  }
  CHECK(scores.scores[0] + scores.scores[1] == doctest::Approx(labeled));

  CHECK_THROWS_AS(region_aggregate(Tensor({2, 2, 1}), atlas), ShapeError);
  AtlasVolume corrupt = atlas;
  corrupt.labels[0] = 7;  // outside 1..regions
  CHECK_THROWS_AS(region_aggregate(sal, corrupt), DataError);
}

TEST_CASE("relabeling permutes the region scores") {
  AtlasVolume atlas;
  atlas.x = 3;
  atlas.y = 1;
  atlas.z = 2;
  atlas.regions = 3;
  atlas.labels = {1, 2, 3, 3, 2, 1};

  // permutation 1->2, 2->3, 3->1
  AtlasVolume relabeled = atlas;
  const int perm[4] = {0, 2, 3, 1};
  for (int& l : relabeled.labels) l = perm[l];

  Tensor sal({3, 1, 2});
  Rng rng(4);
  for (std::int64_t i = 0; i < sal.size(); ++i) sal[i] = std::fabs(rng.normal());
  RegionScores base = region_aggregate(sal, atlas);
  RegionScores moved = region_aggregate(sal, relabeled);
  for (int r = 1; r <= 3; ++r) {
    CHECK(moved.scores[static_cast<std::size_t>(perm[r] - 1)] ==
          doctest::Approx(base.scores[static_cast<std::size_t>(r - 1)]));
  }
}

TEST_CASE("top regions rank by score with the n-th score as the unit") {
  RegionScores scores;
  scores.scores = {5.0, 9.0, 1.0, 7.0};
  std::vector<RankedRegion> top = top_regions(scores, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].label == 2);
  CHECK(top[1].label == 4);
  CHECK(top[2].label == 1);
  CHECK(top[0].relative == doctest::Approx(9.0 / 5.0));
  CHECK(top[1].relative == doctest::Approx(7.0 / 5.0));
  CHECK(top[2].relative == doctest::Approx(1.0));

  std::vector<RankedRegion> full = top_regions(scores, 4);
  CHECK(full[3].label == 3);

  RegionScores tied;
  tied.scores = {2.0, 2.0, 2.0};
  std::vector<RankedRegion> t = top_regions(tied, 2);
  CHECK(t[0].label == 1);  // ties break by ascending label
  CHECK(t[1].label == 2);

  RegionScores zeros;
  zeros.scores = {3.0, 0.0};
  std::vector<RankedRegion> z = top_regions(zeros, 2);
  CHECK(z[1].relative == 0.0);  // zero unit: raw scores reported
  CHECK(z[0].relative == doctest::Approx(3.0));

  CHECK_THROWS_AS(top_regions(scores, 0), ConfigError);
  CHECK_THROWS_AS(top_regions(scores, 5), ConfigError);
}

TEST_CASE("spearman hand values and tie handling") {
  CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {2, 1, 3}) == doctest::Approx(0.5));
  // ranks (1.5, 1.5, 3) vs (1, 2, 3): 1.5 / sqrt(1.5 * 2)
  CHECK(spearman({1, 1, 2}, {1, 2, 3}) == doctest::Approx(std::sqrt(3.0) / 2.0));
}

TEST_CASE("spearman ignores strictly monotone transforms") {
  std::vector<double> a = {0.3, 1.7, -2.0, 0.9, 4.2};
  std::vector<double> b = {1.0, 0.2, 3.3, -0.5, 2.0};
  const double base = spearman(a, b);
  std::vector<double> ea(a.size()), cb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ea[i] = std::exp(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) cb[i] = b[i] * b[i] * b[i];
  CHECK(spearman(ea, b) == doctest::Approx(base));
  CHECK(spearman(a, cb) == doctest::Approx(base));
}

TEST_CASE("spearman rejects degenerate inputs") {
  CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2}), ShapeError);
  CHECK_THROWS_AS(spearman({1}, {2}), ShapeError);
  CHECK_THROWS_AS(spearman({2, 2, 2}, {1, 2, 3}), NumericError);
}

}  // TEST_SUITE
