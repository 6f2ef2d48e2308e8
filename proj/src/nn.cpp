#include "chardec/nn.hpp"

#include <algorithm>
#include <string>

#include "chardec/error.hpp"

namespace chardec {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

void ConvSpec::validate() const {
  if (in_maps < 1 || out_maps < 1) throw ShapeError("conv map counts must be >= 1");
  for (int k : {kq, kr, ks}) {
    if (k < 1 || k % 2 == 0) {
      throw ShapeError("conv kernel extents must be odd and >= 1, got " + std::to_string(k));
    }
  }
}

std::vector<int> ConvSpec::output_dims(const std::vector<int>& in) const {
  require(in.size() == 4, "conv input must be rank 4 [K,X,Y,Z]");
  require(in[0] == in_maps, "conv input map count mismatch: input has " +
                                std::to_string(in[0]) + ", kernels expect " +
                                std::to_string(in_maps));
  std::vector<int> out{out_maps, in[1] - kq + 1, in[2] - kr + 1, in[3] - ks + 1};
  for (int i = 1; i < 4; ++i) {
    require(out[static_cast<std::size_t>(i)] >= 1,
            "conv input extents smaller than kernel extents");
  }
  return out;
}

ConvSpec conv_spec_for(const Tensor& kernels) {
  require(kernels.rank() == 5, "conv kernels must be rank 5 [J,K,Q,R,S]");
  ConvSpec spec;
  spec.out_maps = kernels.dim(0);
  spec.in_maps = kernels.dim(1);
  spec.kq = kernels.dim(2);
  spec.kr = kernels.dim(3);
  spec.ks = kernels.dim(4);
  spec.validate();
  return spec;
}

Tensor conv3d_forward(const Tensor& input, const Tensor& kernels) {
  ConvSpec spec = conv_spec_for(kernels);
  std::vector<int> od = spec.output_dims(input.dims());
  Tensor out(od);

  const int X = input.dim(1), Y = input.dim(2), Z = input.dim(3);
  const int OX = od[1], OY = od[2], OZ = od[3];
  const int Q = spec.kq, R = spec.kr, S = spec.ks;
  const std::int64_t in_map = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t out_map = static_cast<std::int64_t>(OX) * OY * OZ;
  const double* in = input.data();
  const double* w = kernels.data();
  double* o = out.data();

  // accumulate k,q,r contributions per output map; innermost runs over
  // contiguous z for both input and output
  for (int j = 0; j < spec.out_maps; ++j) {
    double* omap = o + j * out_map;
    for (int k = 0; k < spec.in_maps; ++k) {
      const double* imap = in + k * in_map;
      const double* wjk = w + ((static_cast<std::int64_t>(j) * spec.in_maps + k) * Q) * R * S;
      for (int q = 0; q < Q; ++q) {
        for (int r = 0; r < R; ++r) {
          const double* wrow = wjk + (static_cast<std::int64_t>(q) * R + r) * S;
          for (int x = 0; x < OX; ++x) {
            for (int y = 0; y < OY; ++y) {
              const double* irow =
                  imap + (static_cast<std::int64_t>(x + q) * Y + (y + r)) * Z;
              double* orow = omap + (static_cast<std::int64_t>(x) * OY + y) * OZ;
              for (int s = 0; s < S; ++s) {
                const double ws = wrow[s];
                if (ws == 0.0) continue;
                const double* ip = irow + s;
                for (int z = 0; z < OZ; ++z) orow[z] += ws * ip[z];
              }
            }
          }
        }
      }
    }
  }
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = std::max(0.0, o[i]);
  return out;
}

void conv3d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output,
                     const Tensor& grad_out, Tensor* grad_input, Tensor& grad_kernels) {
  ConvSpec spec = conv_spec_for(kernels);
  std::vector<int> od = spec.output_dims(input.dims());
  require(output.dims() == od, "conv backward: output shape mismatch");
  require(grad_out.dims() == od, "conv backward: grad_out shape mismatch");

  // grad wrt pre-activation: ReLU gate (zero output means inactive)
  Tensor gpre(od);
  for (std::int64_t i = 0; i < gpre.size(); ++i) {
    gpre[i] = output[i] > 0.0 ? grad_out[i] : 0.0;
  }

  if (!grad_kernels.same_shape(kernels)) grad_kernels = Tensor(kernels.dims());
  if (grad_input && !grad_input->same_shape(input)) *grad_input = Tensor(input.dims());

  const int Y = input.dim(2), Z = input.dim(3);
  const int OX = od[1], OY = od[2], OZ = od[3];
  const int Q = spec.kq, R = spec.kr, S = spec.ks;
  const std::int64_t in_map = static_cast<std::int64_t>(input.dim(1)) * Y * Z;
  const std::int64_t out_map = static_cast<std::int64_t>(OX) * OY * OZ;
  const double* in = input.data();
  const double* w = kernels.data();
  const double* g = gpre.data();
  double* gw = grad_kernels.data();
  double* gi = grad_input ? grad_input->data() : nullptr;

  for (int j = 0; j < spec.out_maps; ++j) {
    const double* gmap = g + j * out_map;
    for (int k = 0; k < spec.in_maps; ++k) {
      const double* imap = in + k * in_map;
      double* gimap = gi ? gi + k * in_map : nullptr;
      const std::int64_t wbase = (static_cast<std::int64_t>(j) * spec.in_maps + k) *
                                 static_cast<std::int64_t>(Q) * R * S;
      for (int q = 0; q < Q; ++q) {
        for (int r = 0; r < R; ++r) {
          for (int s = 0; s < S; ++s) {
            const std::int64_t widx = wbase + (static_cast<std::int64_t>(q) * R + r) * S + s;
            const double ws = w[widx];
            double acc = 0.0;
            for (int x = 0; x < OX; ++x) {
              for (int y = 0; y < OY; ++y) {
                const double* grow = gmap + (static_cast<std::int64_t>(x) * OY + y) * OZ;
                const double* irow =
                    imap + (static_cast<std::int64_t>(x + q) * Y + (y + r)) * Z + s;
                double dot = 0.0;
                for (int z = 0; z < OZ; ++z) dot += grow[z] * irow[z];
                acc += dot;
                if (gimap) {
                  double* girow =
                      gimap + (static_cast<std::int64_t>(x + q) * Y + (y + r)) * Z + s;
                  for (int z = 0; z < OZ; ++z) girow[z] += ws * grow[z];
                }
              }
            }
            gw[widx] += acc;
          }
        }
      }
    }
  }
}

PoolResult maxpool3d(const Tensor& input) {
  require(input.rank() == 4, "maxpool input must be rank 4 [K,X,Y,Z]");
  const int K = input.dim(0), X = input.dim(1), Y = input.dim(2), Z = input.dim(3);
  for (int e : {X, Y, Z}) {
    if (e < 2) throw ShapeError("maxpool input extent " + std::to_string(e) + " < window 2");
  }
  const int OX = X / 2, OY = Y / 2, OZ = Z / 2;

  PoolResult res;
  res.output = Tensor({K, OX, OY, OZ});
  res.argmax.assign(static_cast<std::size_t>(res.output.size()), 0);

  const double* in = input.data();
  double* out = res.output.data();
  std::int64_t oi = 0;
  for (int k = 0; k < K; ++k) {
    const std::int64_t kbase = static_cast<std::int64_t>(k) * X * Y * Z;
    for (int x = 0; x < OX; ++x) {
      for (int y = 0; y < OY; ++y) {
        for (int z = 0; z < OZ; ++z, ++oi) {
          double best = -1.0;
          std::int64_t best_idx = -1;
          for (int dx = 0; dx < 2; ++dx) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dz = 0; dz < 2; ++dz) {
                const std::int64_t idx =
                    kbase + ((static_cast<std::int64_t>(2 * x + dx) * Y + (2 * y + dy)) * Z +
                             (2 * z + dz));
                if (best_idx < 0 || in[idx] > best) {
                  best = in[idx];
                  best_idx = idx;
                }
              }
            }
          }
          out[oi] = best;
          res.argmax[static_cast<std::size_t>(oi)] = best_idx;
        }
      }
    }
  }
  return res;
}

void maxpool3d_backward(const PoolResult& pooled, const Tensor& grad_out,
                        Tensor& grad_input) {
  require(grad_out.dims() == pooled.output.dims(), "maxpool backward: grad shape mismatch");
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    grad_input[pooled.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  }
}

GlobalPoolResult global_maxpool(const Tensor& input) {
  require(input.rank() >= 2, "global maxpool input must have maps plus spatial dims");
  const int J = input.dim(0);
  const std::int64_t per_map = input.size() / J;
  require(per_map >= 1, "global maxpool: empty feature maps");

  GlobalPoolResult res;
  res.output.resize(static_cast<std::size_t>(J));
  res.argmax.resize(static_cast<std::size_t>(J));
  const double* in = input.data();
  for (int j = 0; j < J; ++j) {
    const double* map = in + j * per_map;
    double best = map[0];
    std::int64_t best_idx = 0;
    for (std::int64_t i = 1; i < per_map; ++i) {
      if (map[i] > best) {
        best = map[i];
        best_idx = i;
      }
    }
    res.output[static_cast<std::size_t>(j)] = best;
    res.argmax[static_cast<std::size_t>(j)] = j * per_map + best_idx;
  }
  return res;
}

void global_maxpool_backward(const GlobalPoolResult& pooled,
                             const std::vector<double>& grad_out, Tensor& grad_input) {
  require(grad_out.size() == pooled.output.size(), "global maxpool backward: size mismatch");
  for (std::size_t j = 0; j < grad_out.size(); ++j) {
    grad_input[pooled.argmax[j]] += grad_out[j];
  }
}

std::vector<double> linear_apply(const std::vector<double>& x, const Tensor& w,
                                 const std::vector<double>* bias) {
  require(w.rank() == 2, "linear weights must be rank 2 [N,M]");
  const int N = w.dim(0), M = w.dim(1);
  require(static_cast<int>(x.size()) == N, "linear input length mismatch");
  if (bias) require(static_cast<int>(bias->size()) == M, "linear bias length mismatch");

  std::vector<double> y(static_cast<std::size_t>(M), 0.0);
  const double* wd = w.data();
  for (int n = 0; n < N; ++n) {
    const double xn = x[static_cast<std::size_t>(n)];
    if (xn == 0.0) continue;
    const double* wrow = wd + static_cast<std::int64_t>(n) * M;
    for (int m = 0; m < M; ++m) y[static_cast<std::size_t>(m)] += xn * wrow[m];
  }
  if (bias) {
    for (int m = 0; m < M; ++m) y[static_cast<std::size_t>(m)] += (*bias)[static_cast<std::size_t>(m)];
  }
  return y;
}

void linear_backward(const std::vector<double>& x, const Tensor& w,
                     const std::vector<double>& grad_y, std::vector<double>& grad_x,
                     Tensor& grad_w, std::vector<double>* grad_bias) {
  const int N = w.dim(0), M = w.dim(1);
  require(static_cast<int>(x.size()) == N && static_cast<int>(grad_y.size()) == M,
          "linear backward: size mismatch");
  if (!grad_w.same_shape(w)) grad_w = Tensor(w.dims());
  grad_x.resize(static_cast<std::size_t>(N), 0.0);

  const double* wd = w.data();
  double* gw = grad_w.data();
  for (int n = 0; n < N; ++n) {
    const double* wrow = wd + static_cast<std::int64_t>(n) * M;
    double* gwrow = gw + static_cast<std::int64_t>(n) * M;
    const double xn = x[static_cast<std::size_t>(n)];
    double acc = 0.0;
    for (int m = 0; m < M; ++m) {
      const double gy = grad_y[static_cast<std::size_t>(m)];
      acc += wrow[m] * gy;
      gwrow[m] += xn * gy;
    }
    grad_x[static_cast<std::size_t>(n)] += acc;
  }
  if (grad_bias) {
    grad_bias->resize(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) (*grad_bias)[static_cast<std::size_t>(m)] += grad_y[static_cast<std::size_t>(m)];
  }
}

}  // namespace chardec
