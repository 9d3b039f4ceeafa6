#include "bseg/gradcheck.hpp"

#include "bseg/losses.hpp"
#include "bseg/network.hpp"
#include "bseg/ops.hpp"
#include "bseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace bseg {

namespace {

double eval_scalar(const TapeFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).tensor()[0];
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Fixed pseudo-random projection turns a tensor-valued function into a
// scalar one; a plain sum would let opposite-signed gradient errors cancel.
Value weighted_sum(Tape& tape, const Value& v, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x77737570));
  Tensor w(v.tensor().shape());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return sum(eltwise_mul(v, tape.leaf(w)));
}

uint64_t tag(uint64_t seed, const std::string& name) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return mix_seed(seed, h);
}

}  // namespace

double max_rel_error_at(const TapeFn& f, const std::vector<Tensor>& inputs,
                        const std::vector<std::pair<size_t, Eigen::Index>>& coords, double step) {
  // Analytic gradients from one reverse pass.
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Value y = f(tape, leaves);
  tape.backward(y);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const Value& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (const auto& [which, elem] : coords) {
    auto rel_at = [&](double h) {
      const double saved = probe[which][elem];
      probe[which][elem] = saved + h;
      double up = eval_scalar(f, probe);
      probe[which][elem] = saved - h;
      double down = eval_scalar(f, probe);
      probe[which][elem] = saved;
      double fd = (up - down) / (2.0 * h);
      double a = analytic[which][elem];
      return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    };
    double rel = rel_at(step);
    // A probe that lands across a relu/clamp kink inflates the central
    // difference; a genuine gradient bug stays large at every step size.
    if (rel > 1e-7) rel = std::min({rel, rel_at(step / 8.0), rel_at(step / 64.0)});
    worst = std::max(worst, rel);
  }
  return worst;
}

double max_rel_error(const TapeFn& f, const std::vector<Tensor>& inputs, double step) {
  std::vector<std::pair<size_t, Eigen::Index>> coords;
  for (size_t i = 0; i < inputs.size(); ++i)
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) coords.emplace_back(i, j);
  return max_rel_error_at(f, inputs, coords, step);
}

namespace {

struct Check {
  TapeFn fn;
  std::vector<Tensor> inputs;
};

void run_repeated(std::vector<GradCheckReport>& out, const std::string& name, double tol,
                  int reps, uint64_t seed, const std::function<Check(Rng&, uint64_t)>& make) {
  double worst = 0.0;
  for (int r = 0; r < reps; ++r) {
    uint64_t rep_seed = mix_seed(seed, static_cast<uint64_t>(r));
    Rng rng(rep_seed);
    Check c = make(rng, rep_seed);
    worst = std::max(worst, max_rel_error(c.fn, c.inputs));
  }
  out.push_back({name, worst, tol, worst < tol});
}

std::shared_ptr<ParameterStore> make_store(uint64_t seed,
                                           const std::function<void(ParamInit&)>& registrar) {
  auto store = std::make_shared<ParameterStore>();
  Rng rng(mix_seed(seed, 0x626c6b));
  ParamInit init{*store, rng};
  registrar(init);
  return store;
}

std::vector<Tensor> store_tensors(const ParameterStore& store) {
  std::vector<Tensor> out;
  out.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) out.push_back(store.entry(i).value);
  return out;
}

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(uint64_t seed) {
  std::vector<GradCheckReport> reports;
  const int reps = 5;

  auto unary = [&](const std::string& name, double lo, double hi,
                   const std::function<Value(const Value&)>& op) {
    run_repeated(reports, name, 1e-6, reps, tag(seed, name), [=](Rng& rng, uint64_t rep_seed) {
      Check c;
      c.inputs = {random_tensor(rng, {1, 2, 3, 4}, lo, hi)};
      c.fn = [op, rep_seed](Tape& t, const std::vector<Value>& v) {
        return weighted_sum(t, op(v[0]), rep_seed);
      };
      return c;
    });
  };
  auto binary = [&](const std::string& name, double lo, double hi,
                    const std::function<Value(const Value&, const Value&)>& op) {
    run_repeated(reports, name, 1e-6, reps, tag(seed, name), [=](Rng& rng, uint64_t rep_seed) {
      Check c;
      c.inputs = {random_tensor(rng, {1, 2, 3, 4}, lo, hi),
                  random_tensor(rng, {1, 2, 3, 4}, lo, hi)};
      c.fn = [op, rep_seed](Tape& t, const std::vector<Value>& v) {
        return weighted_sum(t, op(v[0], v[1]), rep_seed);
      };
      return c;
    });
  };

  unary("sigmoid", -3.0, 3.0, [](const Value& x) { return sigmoid(x); });
  unary("relu", 0.1, 2.0, [](const Value& x) { return relu(x); });  // kink avoided
  unary("log", 0.2, 3.0, [](const Value& x) { return log(x); });
  unary("clamp", -0.4, 0.4, [](const Value& x) { return clamp(x, -0.5, 0.5); });
  unary("scale", -2.0, 2.0, [](const Value& x) { return scale(x, -1.7); });
  unary("add_scalar", -2.0, 2.0, [](const Value& x) { return add_scalar(x, 0.3); });
  unary("global_avg_pool", -2.0, 2.0, [](const Value& x) { return global_avg_pool(x); });
  unary("resize_up", -2.0, 2.0, [](const Value& x) { return resize_bilinear(x, 7, 9); });
  unary("resize_down", -2.0, 2.0, [](const Value& x) { return resize_bilinear(x, 2, 2); });
  unary("sum", -2.0, 2.0, [](const Value& x) { return sum(x); });
  unary("mean", -2.0, 2.0, [](const Value& x) { return mean(x); });

  binary("add", -2.0, 2.0, [](const Value& a, const Value& b) { return add(a, b); });
  binary("sub", -2.0, 2.0, [](const Value& a, const Value& b) { return sub(a, b); });
  binary("eltwise_mul", -2.0, 2.0,
         [](const Value& a, const Value& b) { return eltwise_mul(a, b); });
  binary("div", 0.5, 2.0, [](const Value& a, const Value& b) { return div(a, b); });
  binary("concat_channels", -2.0, 2.0,
         [](const Value& a, const Value& b) { return concat_channels(a, b); });

  run_repeated(reports, "broadcast_mul", 1e-6, reps, tag(seed, "broadcast_mul"),
               [](Rng& rng, uint64_t rep_seed) {
                 Check c;
                 c.inputs = {random_tensor(rng, {1, 3, 3, 4}, -2, 2),
                             random_tensor(rng, {1, 1, 3, 4}, -2, 2)};
                 c.fn = [rep_seed](Tape& t, const std::vector<Value>& v) {
                   return weighted_sum(t, broadcast_mul(v[0], v[1]), rep_seed);
                 };
                 return c;
               });

  run_repeated(reports, "instance_norm", 1e-6, reps, tag(seed, "instance_norm"),
               [](Rng& rng, uint64_t rep_seed) {
                 Check c;
                 c.inputs = {random_tensor(rng, {2, 2, 3, 3}, -2, 2),
                             random_tensor(rng, {2}, 0.5, 1.5),
                             random_tensor(rng, {2}, -0.5, 0.5)};
                 c.fn = [rep_seed](Tape& t, const std::vector<Value>& v) {
                   return weighted_sum(t, instance_norm(v[0], v[1], v[2]), rep_seed);
                 };
                 return c;
               });

  struct ConvCase {
    std::string name;
    std::vector<int> in_shape, k_shape;
    Conv2dOpts opts;
  };
  const ConvCase conv_cases[] = {
      {"conv2d_1x1", {1, 2, 5, 5}, {3, 2, 1, 1}, {1, 1, 0}},
      {"conv2d_3x3_pad1", {1, 2, 5, 5}, {2, 2, 3, 3}, {1, 1, 1}},
      {"conv2d_stride2", {1, 1, 6, 6}, {2, 1, 3, 3}, {2, 1, 1}},
      {"conv2d_dilated2", {1, 1, 7, 7}, {1, 1, 3, 3}, {1, 2, 2}},
  };
  for (const ConvCase& cc : conv_cases) {
    run_repeated(reports, cc.name, 1e-6, reps, tag(seed, cc.name),
                 [cc](Rng& rng, uint64_t rep_seed) {
                   Check c;
                   c.inputs = {random_tensor(rng, cc.in_shape, -1, 1),
                               random_tensor(rng, cc.k_shape, -1, 1),
                               random_tensor(rng, {cc.k_shape[0]}, -0.5, 0.5)};
                   c.fn = [cc, rep_seed](Tape& t, const std::vector<Value>& v) {
                     return weighted_sum(t, conv2d(v[0], v[1], v[2], cc.opts), rep_seed);
                   };
                   return c;
                 });
  }

  // Composite blocks: the input and every parameter of the block are probed.
  struct BlockCase {
    std::string name;
    ResidualBlockSpec spec;
    std::vector<int> in_shape;
  };
  const BlockCase block_cases[] = {
      {"residual_block_identity", {3, 3, 1}, {1, 3, 6, 6}},
      {"residual_block_widen", {2, 4, 1}, {1, 2, 6, 6}},
      {"residual_block_stride2", {3, 3, 2}, {1, 3, 6, 6}},
  };
  for (const BlockCase& bc : block_cases) {
    run_repeated(reports, bc.name, 1e-6, 2, tag(seed, bc.name),
                 [bc](Rng& rng, uint64_t rep_seed) {
                   auto store = make_store(rep_seed, [&](ParamInit& init) {
                     register_residual_block(init, "blk", bc.spec);
                   });
                   Check c;
                   c.inputs.push_back(random_tensor(rng, bc.in_shape, -1, 1));
                   for (Tensor& t : store_tensors(*store)) c.inputs.push_back(std::move(t));
                   c.fn = [store, bc, rep_seed](Tape& tape, const std::vector<Value>& vals) {
                     BoundParams bound(*store, {vals.begin() + 1, vals.end()});
                     return weighted_sum(tape, residual_block(vals[0], bc.spec, bound, "blk"),
                                         rep_seed);
                   };
                   return c;
                 });
  }

  run_repeated(reports, "attention_gate", 1e-6, 2, tag(seed, "attention_gate"),
               [](Rng& rng, uint64_t rep_seed) {
                 AttentionGateSpec spec{2, 3};
                 auto store = make_store(rep_seed, [&](ParamInit& init) {
                   register_attention_gate(init, "gate", spec);
                 });
                 Check c;
                 c.inputs.push_back(random_tensor(rng, {1, 2, 4, 4}, -1, 1));
                 c.inputs.push_back(random_tensor(rng, {1, 3, 4, 4}, -1, 1));
                 for (Tensor& t : store_tensors(*store)) c.inputs.push_back(std::move(t));
                 c.fn = [store, spec, rep_seed](Tape& tape, const std::vector<Value>& vals) {
                   BoundParams bound(*store, {vals.begin() + 2, vals.end()});
                   GateOutput out = attention_gate(vals[0], vals[1], spec, bound, "gate");
                   return add(weighted_sum(tape, out.out, rep_seed),
                              weighted_sum(tape, out.alpha, mix_seed(rep_seed, 1)));
                 };
                 return c;
               });

  run_repeated(reports, "dspp", 1e-6, 2, tag(seed, "dspp"), [](Rng& rng, uint64_t rep_seed) {
    DsppSpec spec{{1, 2}, 2};
    auto store = make_store(rep_seed,
                            [&](ParamInit& init) { register_dspp(init, "dspp", spec, 3); });
    Check c;
    c.inputs.push_back(random_tensor(rng, {1, 3, 5, 5}, -1, 1));
    for (Tensor& t : store_tensors(*store)) c.inputs.push_back(std::move(t));
    c.fn = [store, spec, rep_seed](Tape& tape, const std::vector<Value>& vals) {
      BoundParams bound(*store, {vals.begin() + 1, vals.end()});
      return weighted_sum(tape, dspp(vals[0], spec, bound, "dspp"), rep_seed);
    };
    return c;
  });

  // Assembled network: training loss probed at 20 randomly chosen parameter
  // elements on a small input.
  {
    NetworkSpec spec;
    spec.levels = 3;
    auto store = std::make_shared<ParameterStore>(init_parameters(spec, mix_seed(seed, 0xfe7)));
    Rng rng(mix_seed(seed, 0xfe8));
    Tensor x = random_tensor(rng, {1, 1, 16, 16}, 0.0, 1.0);
    Tensor y({1, 1, 16, 16});
    for (int h = 5; h < 11; ++h)
      for (int w = 5; w < 11; ++w) y.at4(0, 0, h, w) = 1.0;

    std::vector<Tensor> inputs = store_tensors(*store);
    TapeFn fn = [store, spec, x, y](Tape& tape, const std::vector<Value>& vals) {
      BoundParams bound(*store, vals);
      ForwardOutput out = forward(tape, x, spec, bound);
      return total_loss(out, y, LossWeights{}).total;
    };

    std::vector<std::pair<size_t, Eigen::Index>> coords;
    for (int k = 0; k < 20; ++k) {
      size_t which = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(inputs.size()) - 1));
      Eigen::Index elem = rng.uniform_int(0, static_cast<int>(inputs[which].size()) - 1);
      coords.emplace_back(which, elem);
    }
    double err = max_rel_error_at(fn, inputs, coords);
    reports.push_back({"network_loss_20_params", err, 1e-5, err < 1e-5});
  }

  return reports;
}

}  // namespace bseg
