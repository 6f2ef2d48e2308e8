#include "chardec/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "chardec/error.hpp"
#include "chardec/stats.hpp"

namespace chardec {

Tensor voxel_saliency(const EncoderParams& params, const EncoderDataset& data) {
  if (data.samples.empty()) throw DataError("saliency: empty dataset");
  if (data.target_dim != params.config.latent_dim) {
    throw ShapeError("saliency: target dim does not match latent dim");
  }
  const std::array<int, 3>& vd = data.volume_dims;
  chain_dims(vd, params.config);
  if (params.conv1.max_abs() == 0.0) {
    std::cerr << "saliency: first-layer kernels are all zero; saliency will be zero\n";
  }

  Tensor scratch({vd[0], vd[1], vd[2]});
  const std::size_t volume_len = static_cast<std::size_t>(scratch.size());
  Tensor saliency({vd[0], vd[1], vd[2]});
  Tensor d_input;
  ForwardCache cache;
  EncoderParams grads = EncoderParams::zeros(params.config);
  const int dim = params.config.latent_dim;
  std::vector<double> d_mu(static_cast<std::size_t>(dim));
  const std::vector<double> d_logvar(static_cast<std::size_t>(dim), 0.0);

  for (const SampleRef& s : data.samples) {
    std::copy(s.volume, s.volume + volume_len, scratch.data());
    const EncodeResult enc = encode(scratch, params, EncodeMode::kMean, nullptr, &cache);
    for (int d = 0; d < dim; ++d) {
      d_mu[static_cast<std::size_t>(d)] = enc.z[static_cast<std::size_t>(d)] - s.target[d];
    }
    d_input.fill(0.0);
    encode_backward(params, cache, d_mu, d_logvar, grads, &d_input);
    for (std::int64_t i = 0; i < saliency.size(); ++i) {
      saliency[i] += std::fabs(d_input[i]);
    }
  }
  return saliency;
}

RegionScores region_aggregate(const Tensor& saliency, const AtlasVolume& atlas) {
  atlas.validate();
  if (saliency.rank() != 3 || saliency.dim(0) != atlas.x || saliency.dim(1) != atlas.y ||
      saliency.dim(2) != atlas.z) {
    throw ShapeError("region_aggregate: saliency and atlas extents differ");
  }
  RegionScores out;
  out.scores.assign(static_cast<std::size_t>(atlas.regions), 0.0);
  for (std::int64_t i = 0; i < saliency.size(); ++i) {
    const int label = atlas.labels[static_cast<std::size_t>(i)];
    if (label > 0) out.scores[static_cast<std::size_t>(label - 1)] += saliency[i];
  }
  return out;
}

std::vector<RankedRegion> top_regions(const RegionScores& scores, int n) {
  const int regions = static_cast<int>(scores.scores.size());
  if (n < 1 || n > regions) {
    throw ConfigError("top_regions: need 1 <= n <= " + std::to_string(regions));
  }
  std::vector<int> order(static_cast<std::size_t>(regions));
  for (int r = 0; r < regions; ++r) order[static_cast<std::size_t>(r)] = r + 1;
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    const double sl = scores.scores[static_cast<std::size_t>(l - 1)];
    const double sr = scores.scores[static_cast<std::size_t>(r - 1)];
    if (sl != sr) return sl > sr;
    return l < r;
  });

  std::vector<RankedRegion> out(static_cast<std::size_t>(n));
  const double unit = scores.scores[static_cast<std::size_t>(order[static_cast<std::size_t>(n - 1)] - 1)];
  for (int i = 0; i < n; ++i) {
    const int label = order[static_cast<std::size_t>(i)];
    const double score = scores.scores[static_cast<std::size_t>(label - 1)];
    // an all-zero tail leaves no unit to normalize by; report raw scores
    out[static_cast<std::size_t>(i)] = {label, score, unit > 0.0 ? score / unit : score};
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) throw ShapeError("spearman: need at least two points");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  auto tied = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  };
  if (tied(ra) || tied(rb)) throw NumericError("spearman: zero rank variance");
  return pearson(ra, rb);
}

}  // namespace chardec
