#include "chardec/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chardec/error.hpp"
#include "chardec/optim.hpp"

namespace chardec {

namespace {

std::string dims3(const std::array<int, 3>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

void EncoderConfig::validate() const {
  for (int d : input_dims) {
    if (d < 1) throw ConfigError("encoder: input dims must be positive");
  }
  for (int k : kernel_edges) {
    if (k < 1 || k % 2 == 0) throw ConfigError("encoder: kernel edges must be odd and >= 1");
  }
  for (int f : filters) {
    if (f < 1) throw ConfigError("encoder: filter counts must be positive");
  }
  if (latent_dim < 1) throw ConfigError("encoder: latent dim must be positive");
  if (logvar_min > logvar_max) throw ConfigError("encoder: logvar clamp bounds inverted");
  chain_dims(input_dims, *this);
}

ChainDims chain_dims(const std::array<int, 3>& input, const EncoderConfig& cfg) {
  ChainDims out;
  auto conv = [](const std::array<int, 3>& in, int k, const char* layer) {
    std::array<int, 3> o{in[0] - k + 1, in[1] - k + 1, in[2] - k + 1};
    if (o[0] < 1 || o[1] < 1 || o[2] < 1) {
      throw ShapeError(std::string(layer) + ": input " + dims3(in) + " smaller than kernel " +
                       std::to_string(k));
    }
    return o;
  };
  auto pool = [](const std::array<int, 3>& in, const char* layer) {
    if (in[0] < 2 || in[1] < 2 || in[2] < 2) {
      throw ShapeError(std::string(layer) + ": input " + dims3(in) + " too small for 2x2x2 window");
    }
    return std::array<int, 3>{in[0] / 2, in[1] / 2, in[2] / 2};
  };
  out.conv1 = conv(input, cfg.kernel_edges[0], "conv1");
  out.pool1 = pool(out.conv1, "pool1");
  out.conv2 = conv(out.pool1, cfg.kernel_edges[1], "conv2");
  out.pool2 = pool(out.conv2, "pool2");
  out.conv3 = conv(out.pool2, cfg.kernel_edges[2], "conv3");
  return out;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p;
  p.config = cfg;
  const int k1 = cfg.kernel_edges[0], k2 = cfg.kernel_edges[1], k3 = cfg.kernel_edges[2];
  p.conv1 = Tensor({cfg.filters[0], 1, k1, k1, k1});
  p.conv2 = Tensor({cfg.filters[1], cfg.filters[0], k2, k2, k2});
  p.conv3 = Tensor({cfg.filters[2], cfg.filters[1], k3, k3, k3});
  p.w_mu = Tensor({cfg.filters[2], cfg.latent_dim});
  p.b_mu = Tensor({cfg.latent_dim});
  p.w_logvar = Tensor({cfg.filters[2], cfg.latent_dim});
  p.b_logvar = Tensor({cfg.latent_dim});
  return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderParams p = zeros(cfg);
  Rng rng(mix_seed(seed, 0x494e4954ull));
  auto kaiming = [&rng](Tensor& t, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    double* d = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) d[i] = rng.uniform(-bound, bound);
  };
  const int k1 = cfg.kernel_edges[0], k2 = cfg.kernel_edges[1], k3 = cfg.kernel_edges[2];
  kaiming(p.conv1, 1 * k1 * k1 * k1);
  kaiming(p.conv2, cfg.filters[0] * k2 * k2 * k2);
  kaiming(p.conv3, cfg.filters[1] * k3 * k3 * k3);
  kaiming(p.w_mu, cfg.filters[2]);
  kaiming(p.w_logvar, cfg.filters[2]);
  return p;
}

std::vector<Tensor*> EncoderParams::tensors() {
  return {&conv1, &conv2, &conv3, &w_mu, &b_mu, &w_logvar, &b_logvar};
}

std::vector<const Tensor*> EncoderParams::tensors() const {
  return {&conv1, &conv2, &conv3, &w_mu, &b_mu, &w_logvar, &b_logvar};
}

void EncoderParams::zero() {
  for (Tensor* t : tensors()) t->fill(0.0);
}

EncodeResult encode(const Tensor& volume, const EncoderParams& params, EncodeMode mode,
                    Rng* rng, ForwardCache* cache) {
  if (volume.rank() != 3) throw ShapeError("encode: volume must be rank 3");
  if (mode == EncodeMode::kSample && rng == nullptr) {
    throw ConfigError("encode: sample mode requires an rng");
  }
  const std::array<int, 3> in{volume.dim(0), volume.dim(1), volume.dim(2)};
  chain_dims(in, params.config);  // names the failing layer before any work

  Tensor input({1, in[0], in[1], in[2]});
  std::copy(volume.data(), volume.data() + volume.size(), input.data());

  Tensor act1 = conv3d_forward(input, params.conv1);
  PoolResult p1 = maxpool3d(act1);
  Tensor act2 = conv3d_forward(p1.output, params.conv2);
  PoolResult p2 = maxpool3d(act2);
  Tensor act3 = conv3d_forward(p2.output, params.conv3);
  GlobalPoolResult g = global_maxpool(act3);

  const int dim = params.config.latent_dim;
  EncodeResult res;
  res.dist.mu = linear_apply(g.output, params.w_mu, &params.b_mu.values());
  std::vector<double> raw_logvar =
      linear_apply(g.output, params.w_logvar, &params.b_logvar.values());

  res.dist.logvar.resize(static_cast<std::size_t>(dim));
  std::vector<std::uint8_t> clamped(static_cast<std::size_t>(dim), 0);
  for (int d = 0; d < dim; ++d) {
    double v = raw_logvar[static_cast<std::size_t>(d)];
    if (v < params.config.logvar_min) {
      v = params.config.logvar_min;
      clamped[static_cast<std::size_t>(d)] = 1;
    } else if (v > params.config.logvar_max) {
      v = params.config.logvar_max;
      clamped[static_cast<std::size_t>(d)] = 1;
    }
    res.dist.logvar[static_cast<std::size_t>(d)] = v;
  }

  if (mode == EncodeMode::kMean) {
    res.z = res.dist.mu;
  } else {
    res.z.resize(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      const double sigma = std::exp(0.5 * res.dist.logvar[static_cast<std::size_t>(d)]);
      res.z[static_cast<std::size_t>(d)] =
          res.dist.mu[static_cast<std::size_t>(d)] + sigma * rng->normal();
    }
  }

  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->act1 = std::move(act1);
    cache->act2 = std::move(act2);
    cache->act3 = std::move(act3);
    cache->pool1 = std::move(p1);
    cache->pool2 = std::move(p2);
    cache->global = std::move(g);
    cache->logvar_clamped = std::move(clamped);
  }
  return res;
}

double kl_standard(const LatentGaussian& dist) {
  double kl = 0.0;
  for (std::size_t d = 0; d < dist.mu.size(); ++d) {
    const double lv = dist.logvar[d];
    kl += std::exp(lv) + dist.mu[d] * dist.mu[d] - 1.0 - lv;
  }
  return 0.5 * kl;
}

double kl_gaussians(const std::vector<double>& mu1, const std::vector<double>& var1,
                    const std::vector<double>& mu2, const std::vector<double>& var2) {
  const std::size_t d = mu1.size();
  if (var1.size() != d || mu2.size() != d || var2.size() != d) {
    throw ShapeError("kl_gaussians: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (!(var1[i] > 0.0) || !(var2[i] > 0.0)) {
      throw NumericError("kl_gaussians: variances must be positive");
    }
    const double diff = mu2[i] - mu1[i];
    kl += var1[i] / var2[i] + diff * diff / var2[i] - 1.0 + std::log(var2[i] / var1[i]);
  }
  return 0.5 * kl;
}

VibLossResult vib_loss(const LatentGaussian& dist, const std::vector<double>& z_sample,
                       const double* y_target, int dim, double beta, double kl_scale) {
  if (static_cast<int>(dist.mu.size()) != dim || static_cast<int>(z_sample.size()) != dim) {
    throw ShapeError("vib_loss: dimension mismatch");
  }
  VibLossResult r;
  r.d_mu.assign(static_cast<std::size_t>(dim), 0.0);
  r.d_logvar.assign(static_cast<std::size_t>(dim), 0.0);
  const double kw = beta * kl_scale;
  for (int i = 0; i < dim; ++i) {
    const std::size_t d = static_cast<std::size_t>(i);
    const double mu = dist.mu[d];
    const double lv = dist.logvar[d];
    const double var = std::exp(lv);
    const double dz = z_sample[d] - y_target[i];
    r.align += 0.5 * dz * dz;
    r.kl += 0.5 * (var + mu * mu - 1.0 - lv);
    // z = mu + sigma * eps, so dz/dmu = 1 and dz/dlogvar = (z - mu) / 2
    r.d_mu[d] = dz + kw * mu;
    r.d_logvar[d] = dz * 0.5 * (z_sample[d] - mu) + kw * 0.5 * (var - 1.0);
  }
  r.total = r.align + kw * r.kl;
  if (!std::isfinite(r.total)) throw NumericError("vib_loss: non-finite loss");
  return r;
}

void encode_backward(const EncoderParams& params, const ForwardCache& cache,
                     const std::vector<double>& d_mu, const std::vector<double>& d_logvar,
                     EncoderParams& grads, Tensor* d_input) {
  const int dim = params.config.latent_dim;
  std::vector<double> d_logvar_gated(d_logvar);
  for (int d = 0; d < dim; ++d) {
    if (cache.logvar_clamped[static_cast<std::size_t>(d)]) {
      d_logvar_gated[static_cast<std::size_t>(d)] = 0.0;
    }
  }

  std::vector<double> d_pooled;  // both heads accumulate into the shared vector
  linear_backward(cache.global.output, params.w_mu, d_mu, d_pooled, grads.w_mu,
                  &grads.b_mu.values());
  linear_backward(cache.global.output, params.w_logvar, d_logvar_gated, d_pooled,
                  grads.w_logvar, &grads.b_logvar.values());

  Tensor d_act3(cache.act3.dims());
  global_maxpool_backward(cache.global, d_pooled, d_act3);

  Tensor d_pool2(cache.pool2.output.dims());
  conv3d_backward(cache.pool2.output, params.conv3, cache.act3, d_act3, &d_pool2, grads.conv3);

  Tensor d_act2(cache.act2.dims());
  maxpool3d_backward(cache.pool2, d_pool2, d_act2);

  Tensor d_pool1(cache.pool1.output.dims());
  conv3d_backward(cache.pool1.output, params.conv2, cache.act2, d_act2, &d_pool1, grads.conv2);

  Tensor d_act1(cache.act1.dims());
  maxpool3d_backward(cache.pool1, d_pool1, d_act1);

  if (d_input != nullptr && d_input->dims() != cache.input.dims()) {
    *d_input = Tensor(cache.input.dims());
  }
  conv3d_backward(cache.input, params.conv1, cache.act1, d_act1, d_input, grads.conv1);
}

TrainHistory train_encoder(EncoderParams& params, const EncoderDataset& data,
                           const TrainConfig& cfg) {
  if (data.samples.empty()) throw DataError("train_encoder: empty dataset");
  if (data.target_dim != params.config.latent_dim) {
    throw ShapeError("train_encoder: target dim does not match latent dim");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ConfigError("train_encoder: epochs and batch size must be positive");
  }
  const std::array<int, 3>& vd = data.volume_dims;
  chain_dims(vd, params.config);

  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(opt_cfg);

  EncoderParams grads = EncoderParams::zeros(params.config);
  const std::vector<Tensor*> param_list = params.tensors();
  const std::vector<Tensor*> grad_list = grads.tensors();
  const std::vector<const Tensor*> grad_view(grad_list.begin(), grad_list.end());

  const int n = static_cast<int>(data.samples.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Tensor scratch({vd[0], vd[1], vd[2]});
  const std::size_t volume_len = static_cast<std::size_t>(scratch.size());
  ForwardCache cache;
  TrainHistory history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x53485546ull, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double sum_loss = 0.0, sum_align = 0.0, sum_kl = 0.0;
    int pos = 0;
    while (pos < n) {
      const int take = std::min(cfg.batch_size, n - pos);
      grads.zero();
      try {
        for (int b = 0; b < take; ++b) {
          const int idx = order[static_cast<std::size_t>(pos + b)];
          const SampleRef& s = data.samples[static_cast<std::size_t>(idx)];
          std::copy(s.volume, s.volume + volume_len, scratch.data());
          Rng sample_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(idx)));
          EncodeResult enc = encode(scratch, params, EncodeMode::kSample, &sample_rng, &cache);
          VibLossResult loss = vib_loss(enc.dist, enc.z, s.target, data.target_dim, cfg.beta,
                                        cfg.kl_scale);
          const double inv = 1.0 / take;
          for (double& g : loss.d_mu) g *= inv;
          for (double& g : loss.d_logvar) g *= inv;
          encode_backward(params, cache, loss.d_mu, loss.d_logvar, grads);
          sum_loss += loss.total;
          sum_align += loss.align;
          sum_kl += loss.kl;
        }
        for (Tensor* g : grad_list) clip_gradients(*g, cfg.clip_lo, cfg.clip_hi);
        opt.step(param_list, grad_view);
      } catch (const NumericError& e) {
        throw NumericError("train_encoder: diverged at epoch " + std::to_string(epoch) + " (" +
                           e.what() + ")");
      }
      pos += take;
    }

    EpochStats stats;
    stats.mean_loss = sum_loss / n;
    stats.mean_align = sum_align / n;
    stats.mean_kl = sum_kl / n;
    if (!std::isfinite(stats.mean_loss)) {
      throw NumericError("train_encoder: diverged at epoch " + std::to_string(epoch));
    }
    history.push_back(stats);
  }
  return history;
}

}  // namespace chardec
