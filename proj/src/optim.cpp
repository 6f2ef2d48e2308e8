#include "chardec/optim.hpp"

#include <cmath>
#include <string>

#include "chardec/error.hpp"
#include "chardec/rng.hpp"

namespace chardec {

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("adamw: params/grads count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->dims());
      v_.emplace_back(p->dims());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adamw: parameter set changed between steps");

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(m_[i])) {
      throw ShapeError("adamw: gradient/moment shape mismatch for parameter " + std::to_string(i));
    }
    double* pd = p.data();
    const double* gd = g.data();
    double* md = m_[i].data();
    double* vd = v_[i].data();
    for (std::int64_t n = 0; n < p.size(); ++n) {
      if (!std::isfinite(gd[n])) {
        throw NumericError("adamw: non-finite gradient in parameter " + std::to_string(i));
      }
      pd[n] -= cfg_.lr * cfg_.weight_decay * pd[n];
      md[n] = cfg_.beta1 * md[n] + (1.0 - cfg_.beta1) * gd[n];
      vd[n] = cfg_.beta2 * vd[n] + (1.0 - cfg_.beta2) * gd[n] * gd[n];
      const double mhat = md[n] / bc1;
      const double vhat = vd[n] / bc2;
      pd[n] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void clip_gradients(Tensor& grads, double lo, double hi) {
  if (lo > hi) throw ConfigError("gradient clip range is empty: lo > hi");
  double* g = grads.data();
  for (std::int64_t i = 0; i < grads.size(); ++i) {
    g[i] = std::min(hi, std::max(lo, g[i]));
  }
}

double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic_grads,
                         double eps, int max_coords, unsigned long long subsample_seed) {
  if (params.size() != analytic_grads.size()) {
    throw ShapeError("finite_diff_check: params/grads count mismatch");
  }
  Rng rng(mix_seed(subsample_seed, 0xfdc));
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& a = *analytic_grads[i];
    const std::int64_t n = p.size();

    std::vector<std::int64_t> coords;
    if (max_coords > 0 && n > max_coords) {
      for (int c = 0; c < max_coords; ++c) {
        coords.push_back(rng.uniform_int(static_cast<int>(n)));
      }
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t c = 0; c < n; ++c) coords[static_cast<std::size_t>(c)] = c;
    }

    for (std::int64_t c : coords) {
      const double saved = p[c];
      p[c] = saved + eps;
      const double up = loss();
      p[c] = saved - eps;
      const double down = loss();
      p[c] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::fabs(numeric), std::fabs(a[c]), 1e-6});
      worst = std::max(worst, std::fabs(numeric - a[c]) / denom);
    }
  }
  return worst;
}

}  // namespace chardec
