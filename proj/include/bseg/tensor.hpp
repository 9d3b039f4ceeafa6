#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace bseg {

using Scalar = double;
using Array = Eigen::ArrayXd;

int64_t numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Dense N-dimensional array of doubles, row-major. Doubles throughout so
// finite-difference gradient checks reach 1e-6 relative tolerance.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, Array data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, Scalar value);
  static Tensor scalar(Scalar value);
  static Tensor from(std::vector<int> shape, std::initializer_list<Scalar> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  Eigen::Index size() const { return data_.size(); }
  std::string shape_str() const { return shape_to_string(shape_); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  // NCHW element access for rank-4 tensors.
  Scalar& at4(int n, int c, int h, int w) { return data_[index4(n, c, h, w)]; }
  Scalar at4(int n, int c, int h, int w) const { return data_[index4(n, c, h, w)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return data_.allFinite(); }

 private:
  Eigen::Index index4(int n, int c, int h, int w) const {
    return ((static_cast<Eigen::Index>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w;
  }

  std::vector<int> shape_;
  Array data_;
};

}  // namespace bseg
