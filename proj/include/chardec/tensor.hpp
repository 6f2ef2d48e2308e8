#ifndef CHARDEC_TENSOR_HPP
#define CHARDEC_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace chardec {

// Dense N-dimensional array of f64, row-major with the last dimension
// fastest. Extents are small (brain volumes, kernels), linear size may not be.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims);
  Tensor(std::vector<int> dims, double fill);
  static Tensor from(std::vector<int> dims, std::vector<double> values);

  int rank() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  void fill(double v);
  bool all_finite() const;
  double max_abs() const;

  std::string shape_str() const;

 private:
  std::vector<int> dims_;
  std::vector<double> data_;
};

std::int64_t checked_volume(const std::vector<int>& dims);

}  // namespace chardec

#endif
