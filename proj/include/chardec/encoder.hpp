#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "chardec/nn.hpp"
#include "chardec/rng.hpp"
#include "chardec/tensor.hpp"

namespace chardec {

// Three conv+pool stages feeding two affine heads. Extents are configurable;
// defaults mirror the full-size deployment.
struct EncoderConfig {
  std::array<int, 3> input_dims{53, 63, 52};
  std::array<int, 3> kernel_edges{7, 7, 7};
  std::array<int, 3> filters{32, 128, 1000};
  int latent_dim = 768;
  double logvar_min = -10.0;
  double logvar_max = 10.0;

  void validate() const;
};

// Dims of each intermediate activation for a given input size. Throws
// ShapeError naming the first layer whose output would be degenerate.
struct ChainDims {
  std::array<int, 3> conv1, pool1, conv2, pool2, conv3;
};
ChainDims chain_dims(const std::array<int, 3>& input, const EncoderConfig& cfg);

struct EncoderParams {
  EncoderConfig config;
  Tensor conv1, conv2, conv3;  // [F, K, k, k, k], bias-free
  Tensor w_mu, b_mu;           // [F3, D], [D]
  Tensor w_logvar, b_logvar;

  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);
  static EncoderParams zeros(const EncoderConfig& cfg);

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  void zero();
};

struct LatentGaussian {
  std::vector<double> mu;
  std::vector<double> logvar;
};

enum class EncodeMode { kMean, kSample };

struct ForwardCache {
  Tensor input;  // [1, X, Y, Z]
  Tensor act1, act2, act3;
  PoolResult pool1, pool2;
  GlobalPoolResult global;
  std::vector<std::uint8_t> logvar_clamped;
};

struct EncodeResult {
  std::vector<double> z;
  LatentGaussian dist;
};

// mode=kSample draws eps ~ N(0, I) from rng (required then, ignored for kMean).
EncodeResult encode(const Tensor& volume, const EncoderParams& params, EncodeMode mode,
                    Rng* rng, ForwardCache* cache = nullptr);

// KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over dims.
double kl_standard(const LatentGaussian& dist);

// Exact KL between diagonal Gaussians; variances must be positive.
double kl_gaussians(const std::vector<double>& mu1, const std::vector<double>& var1,
                    const std::vector<double>& mu2, const std::vector<double>& var2);

struct VibLossResult {
  double total = 0.0;
  double align = 0.0;  // 0.5 * ||z - y||^2
  double kl = 0.0;     // unscaled KL to N(0, I)
  std::vector<double> d_mu;
  std::vector<double> d_logvar;
};

// loss = align + beta * kl_scale * kl. Gradients flow through the
// reparametrized sample: eps is recovered as (z - mu) / sigma.
VibLossResult vib_loss(const LatentGaussian& dist, const std::vector<double>& z_sample,
                       const double* y_target, int dim, double beta, double kl_scale);

// Accumulates into grads (caller zeroes once per batch).
void encode_backward(const EncoderParams& params, const ForwardCache& cache,
                     const std::vector<double>& d_mu, const std::vector<double>& d_logvar,
                     EncoderParams& grads, Tensor* d_input = nullptr);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta = 1.0;
  double kl_scale = 0.01;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  std::uint64_t seed = 0;
};

struct EpochStats {
  double mean_loss = 0.0;
  double mean_align = 0.0;
  double mean_kl = 0.0;
};
using TrainHistory = std::vector<EpochStats>;

// Non-owning view over training pairs; volume/target point at contiguous
// X*Y*Z and D doubles that must outlive training.
struct SampleRef {
  const double* volume;
  const double* target;
};

struct EncoderDataset {
  std::array<int, 3> volume_dims{0, 0, 0};
  int target_dim = 0;
  std::vector<SampleRef> samples;
};

TrainHistory train_encoder(EncoderParams& params, const EncoderDataset& data,
                           const TrainConfig& cfg);

}  // namespace chardec
