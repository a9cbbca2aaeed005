#include "kamg/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "kamg/errors.hpp"

namespace kamg {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  numel_ = shape_numel(shape_);
  data_ = std::make_unique<double[]>(static_cast<size_t>(numel_));  // zero-filled
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), numel_(other.numel_) {
  data_ = std::make_unique_for_overwrite<double[]>(static_cast<size_t>(numel_));
  std::memcpy(data_.get(), other.data_.get(), static_cast<size_t>(numel_) * sizeof(double));
}

Tensor& Tensor::operator=(const Tensor& other) {
  if (this == &other) return *this;
  if (numel_ != other.numel_) {
    data_ = std::make_unique_for_overwrite<double[]>(static_cast<size_t>(other.numel_));
  }
  shape_ = other.shape_;
  numel_ = other.numel_;
  std::memcpy(data_.get(), other.data_.get(), static_cast<size_t>(numel_) * sizeof(double));
  return *this;
}

Tensor Tensor::uninitialized(std::vector<int64_t> shape) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = shape_numel(t.shape_);
  t.data_ = std::make_unique_for_overwrite<double[]>(static_cast<size_t>(t.numel_));
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t = uninitialized(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ContractError("data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }
  Tensor t = uninitialized(std::move(shape));
  std::memcpy(t.data_.get(), data.data(), data.size() * sizeof(double));
  return t;
}

void Tensor::fill(double value) {
  for (int64_t i = 0; i < numel_; ++i) data_[i] = value;
}

bool Tensor::all_finite() const {
  for (int64_t i = 0; i < numel_; ++i) {
    if (!std::isfinite(data_[i])) return false;
  }
  return true;
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw ContractError("expected scalar, got shape " + shape_str(shape_));
  }
  return data_[0];
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw ContractError("transpose2d expects rank-2, got " + shape_str(x));
  const int64_t r = x.dim(0), c = x.dim(1);
  Tensor y = Tensor::uninitialized({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) y.at(j, i) = x.at(i, j);
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ContractError("shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace kamg
