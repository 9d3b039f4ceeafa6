#include "bseg/params.hpp"

#include <cmath>
#include <stdexcept>

namespace bseg {

void ParameterStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor grad = Tensor::zeros(value.shape());
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, std::move(value), std::move(grad)});
}

size_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& e : entries_) e.grad.array().setZero();
}

BoundParams::BoundParams(Tape& tape, const ParameterStore& store) : store_(&store) {
  leaves_.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) leaves_.push_back(tape.leaf(store.entry(i).value));
}

BoundParams::BoundParams(const ParameterStore& store, std::vector<Value> leaves)
    : store_(&store), leaves_(std::move(leaves)) {
  if (leaves_.size() != store.size())
    throw std::logic_error("BoundParams: leaf count does not match store");
}

const Value& BoundParams::operator[](const std::string& name) const {
  return leaves_[store_->index_of(name)];
}

void BoundParams::write_grads(ParameterStore& store) const {
  if (&store != store_) throw std::logic_error("write_grads: different store than bound");
  for (size_t i = 0; i < leaves_.size(); ++i) {
    store.entry(i).grad = leaves_[i].grad();
  }
}

void ParamInit::conv(const std::string& name, int out_ch, int in_ch, int kh, int kw) {
  Tensor w({out_ch, in_ch, kh, kw});
  Scalar fan_in = static_cast<Scalar>(in_ch) * kh * kw;
  Scalar stddev = std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  store.add(name + ".weight", std::move(w));
  store.add(name + ".bias", Tensor::zeros({out_ch}));
}

void ParamInit::norm(const std::string& name, int channels) {
  store.add(name + ".gamma", Tensor::full({channels}, 1.0));
  store.add(name + ".beta", Tensor::zeros({channels}));
}

}  // namespace bseg
