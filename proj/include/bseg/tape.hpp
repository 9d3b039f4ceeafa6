#pragma once

#include "bseg/tensor.hpp"

#include <functional>
#include <vector>

namespace bseg {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns all storage.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& tensor() const;
  const Tensor& grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

using BackwardFn = std::function<void(Tape&)>;

// Reverse-mode record. Nodes are appended in forward order, so every node's
// inputs precede it; backward() walks the list in reverse.
class Tape {
 public:
  Value leaf(Tensor value);
  Value emit(Tensor value, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(int id) const { return grads_[static_cast<size_t>(id)]; }

  // Accumulation access for backward rules; marks the node as carrying
  // gradient so its own backward rule runs.
  Tensor& grad_acc(int id) {
    touched_[static_cast<size_t>(id)] = true;
    return grads_[static_cast<size_t>(id)];
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a single element.
  void backward(const Value& loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }

  // First node whose value or gradient contains a non-finite element, or -1.
  int first_non_finite() const;

 private:
  struct Node {
    Tensor value;
    BackwardFn backward;  // empty for leaves
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> touched_;
};

}  // namespace bseg
