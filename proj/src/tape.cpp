#include "bseg/tape.hpp"

#include <stdexcept>

namespace bseg {

const Tensor& Value::tensor() const {
  if (!valid()) throw std::logic_error("use of unbound Value");
  return tape_->value(id_);
}

const Tensor& Value::grad() const {
  if (!valid()) throw std::logic_error("use of unbound Value");
  return tape_->grad(id_);
}

Value Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), BackwardFn()});
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Tape::emit(Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(backward)});
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Value& loss) {
  if (loss.tape() != this) throw std::logic_error("backward: value belongs to another tape");
  if (loss.tensor().size() != 1) {
    throw std::invalid_argument("backward: loss must be a single element, got shape " +
                                loss.tensor().shape_str());
  }
  size_t n = nodes_.size();
  grads_.assign(n, Tensor());
  touched_.assign(n, 0);
  for (size_t i = 0; i < n; ++i) grads_[i] = Tensor::zeros(nodes_[i].value.shape());

  grad_acc(loss.id()).array()[0] = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    if (!touched_[static_cast<size_t>(i)]) continue;
    const auto& fn = nodes_[static_cast<size_t>(i)].backward;
    if (fn) fn(*this);
  }
}

int Tape::first_non_finite() const {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) return static_cast<int>(i);
    if (i < grads_.size() && grads_[i].size() > 0 && !grads_[i].all_finite())
      return static_cast<int>(i);
  }
  return -1;
}

}  // namespace bseg
