#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace kamg {

// Dense row-major tensor of 64-bit floats. Every real-valued quantity in the
// project (embeddings, hidden states, logits, weights) lives in one of these.
// Value semantics; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);  // zero-filled

  Tensor(const Tensor& other);
  Tensor& operator=(const Tensor& other);
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  // Contents unspecified; for op outputs that overwrite every element.
  static Tensor uninitialized(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data);
  static Tensor scalar(double value) { return from({1}, {value}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return numel_; }
  bool empty() const { return numel_ == 0; }

  double* data() { return data_.get(); }
  const double* data() const { return data_.get(); }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // 2-D accessors; rows/cols of the trailing matrix view.
  int64_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
  int64_t cols() const { return rank() >= 2 ? shape_[1] : 1; }
  double& at(int64_t r, int64_t c) { return data_[r * cols() + c]; }
  double at(int64_t r, int64_t c) const { return data_[r * cols() + c]; }

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  double scalar_value() const;  // requires numel() == 1

 private:
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  std::unique_ptr<double[]> data_;
};

std::string shape_str(const std::vector<int64_t>& shape);
inline std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

Tensor transpose2d(const Tensor& x);

// Max absolute elementwise difference; both tensors must share a shape.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kamg
