#pragma once

#include "bseg/rng.hpp"
#include "bseg/tape.hpp"
#include "bseg/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace bseg {

// Named, ordered collection of trainable tensors. Iteration order is the
// insertion order, which registration keeps fixed so checkpoints are
// bit-exact across runs.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  void add(const std::string& name, Tensor value);

  size_t size() const { return entries_.size(); }
  const Entry& entry(size_t i) const { return entries_[i]; }
  Entry& entry(size_t i) { return entries_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  size_t index_of(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& grad(const std::string& name) const { return entries_[index_of(name)].grad; }

  void zero_grads();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// One tape leaf per store entry, created in store order so tape layout is
// deterministic. Blocks look their parameters up by name.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParameterStore& store);

  // Binds existing leaves (one per entry, in store order); used by gradient
  // checking, which owns the leaves so it can perturb them.
  BoundParams(const ParameterStore& store, std::vector<Value> leaves);

  const Value& operator[](const std::string& name) const;

  // Copies d(loss)/d(param) from the tape back into the store after backward().
  void write_grads(ParameterStore& store) const;

 private:
  const ParameterStore* store_;
  std::vector<Value> leaves_;
};

// Registration helpers shared by all blocks: He fan-in init for conv
// kernels, zeros for biases, ones/zeros for normalization scale/shift.
struct ParamInit {
  ParameterStore& store;
  Rng& rng;

  void conv(const std::string& name, int out_ch, int in_ch, int kh, int kw);
  void norm(const std::string& name, int channels);
};

}  // namespace bseg
