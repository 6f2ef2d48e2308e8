#include "chardec/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "chardec/error.hpp"

namespace chardec {

std::int64_t checked_volume(const std::vector<int>& dims) {
  std::int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
  data_.assign(static_cast<std::size_t>(checked_volume(dims_)), 0.0);
}

Tensor::Tensor(std::vector<int> dims, double fill) : Tensor(std::move(dims)) {
  this->fill(fill);
}

Tensor Tensor::from(std::vector<int> dims, std::vector<double> values) {
  if (checked_volume(dims) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("tensor data length does not match extents");
  }
  Tensor t;
  t.dims_ = std::move(dims);
  t.data_ = std::move(values);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::fabs(x));
  return m;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace chardec
