#ifndef CHARDEC_OPTIM_HPP
#define CHARDEC_OPTIM_HPP

#include <functional>
#include <vector>

#include "chardec/tensor.hpp"

namespace chardec {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay: params are first shrunk by lr*wd, then moved by the
// bias-corrected Adam step. Deterministic given identical inputs.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // params and grads are parallel lists; moments are lazily shaped on the
  // first call and must keep matching afterwards.
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  int steps_taken() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  int step_ = 0;
  std::vector<Tensor> m_, v_;
};

void clip_gradients(Tensor& grads, double lo = -1.0, double hi = 1.0);

// Central-difference check of analytic gradients. loss() must be
// deterministic (any sampling frozen). Coordinates are subsampled per tensor
// when a tensor exceeds max_coords (0 = check all). Relative error uses
// max(|analytic|, |numeric|, 1e-6) as denominator.
double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic_grads,
                         double eps = 1e-5, int max_coords = 0,
                         unsigned long long subsample_seed = 0);

}  // namespace chardec

#endif
