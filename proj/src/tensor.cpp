#include "bseg/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace bseg {

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_ = Array::Zero(numel(shape_));
}

Tensor::Tensor(std::vector<int> shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, Scalar value) {
  int64_t n = numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, value));
}

Tensor Tensor::scalar(Scalar value) { return full({1}, value); }

Tensor Tensor::from(std::vector<int> shape, std::initializer_list<Scalar> values) {
  Array a(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (Scalar v : values) a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

}  // namespace bseg
