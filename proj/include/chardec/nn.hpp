#ifndef CHARDEC_NN_HPP
#define CHARDEC_NN_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "chardec/tensor.hpp"

namespace chardec {

// Valid (no padding), stride-1 3D convolution. Kernel extents must be odd.
struct ConvSpec {
  int in_maps = 1;
  int out_maps = 1;
  int kq = 1, kr = 1, ks = 1;

  void validate() const;
  std::vector<int> output_dims(const std::vector<int>& input_dims) const;
};

ConvSpec conv_spec_for(const Tensor& kernels);

// input [K,X,Y,Z], kernels [J,K,Q,R,S] -> ReLU(valid conv), [J,X',Y',Z'].
// No bias term: an all-zero input always maps to an all-zero output.
Tensor conv3d_forward(const Tensor& input, const Tensor& kernels);

// Gradients of conv3d_forward. `output` is the forward result (post-ReLU);
// sites with output == 0 are treated as inactive. grad_input is skipped when
// null (first layer during training).
//
// All backward functions accumulate into their grad outputs; callers zero
// the buffers once per batch.
void conv3d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output,
                     const Tensor& grad_out, Tensor* grad_input, Tensor& grad_kernels);

// 2x2x2 max pooling with stride 2; trailing odd planes are dropped. Ties go
// to the lowest linear index. argmax holds per-output linear indices into
// the input tensor.
struct PoolResult {
  Tensor output;
  std::vector<std::int64_t> argmax;
};
PoolResult maxpool3d(const Tensor& input);
void maxpool3d_backward(const PoolResult& pooled, const Tensor& grad_out,
                        Tensor& grad_input);

// input [J, ...] -> per-map maximum, [J]. argmax holds linear indices.
struct GlobalPoolResult {
  std::vector<double> output;
  std::vector<std::int64_t> argmax;
};
GlobalPoolResult global_maxpool(const Tensor& input);
void global_maxpool_backward(const GlobalPoolResult& pooled,
                             const std::vector<double>& grad_out, Tensor& grad_input);

// y = x^T W (+ bias). W is [N, M].
std::vector<double> linear_apply(const std::vector<double>& x, const Tensor& w,
                                 const std::vector<double>* bias);
void linear_backward(const std::vector<double>& x, const Tensor& w,
                     const std::vector<double>& grad_y, std::vector<double>& grad_x,
                     Tensor& grad_w, std::vector<double>* grad_bias);

}  // namespace chardec

#endif
