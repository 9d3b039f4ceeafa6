#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bseg/network.hpp"
#include "bseg/rng.hpp"

#include <cmath>

using namespace bseg;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

ParameterStore make_store(uint64_t seed, const std::function<void(ParamInit&)>& registrar) {
  ParameterStore store;
  Rng rng(seed);
  ParamInit init{store, rng};
  registrar(init);
  return store;
}

void zero_all(ParameterStore& store, const std::string& contains) {
  for (size_t i = 0; i < store.size(); ++i) {
    if (store.entry(i).name.find(contains) != std::string::npos)
      store.entry(i).value.array().setZero();
  }
}

// Independent attention pipeline on plain doubles: concatenate, 1x1
// convolution, logistic, multiply. No tape code.
void naive_gate(const Tensor& s, const Tensor& m, const Tensor& w, const Tensor& b, Tensor* out,
                Tensor* alpha) {
  const int N = s.dim(0), Cs = s.dim(1), Cm = m.dim(1), H = s.dim(2), W = s.dim(3);
  *alpha = Tensor({N, 1, H, W});
  *out = Tensor(s.shape());
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int x = 0; x < W; ++x) {
        double acc = b[0];
        for (int c = 0; c < Cs; ++c) acc += w.at4(0, c, 0, 0) * s.at4(n, c, h, x);
        for (int c = 0; c < Cm; ++c) acc += w.at4(0, Cs + c, 0, 0) * m.at4(n, c, h, x);
        double a = 1.0 / (1.0 + std::exp(-acc));
        alpha->at4(n, 0, h, x) = a;
        for (int c = 0; c < Cs; ++c) out->at4(n, c, h, x) = s.at4(n, c, h, x) * a;
      }
}

}  // namespace

TEST_CASE("residual block with zeroed convolutions is an exact identity") {
  ResidualBlockSpec spec{4, 4, 1};
  ParameterStore store = make_store(3, [&](ParamInit& i) {
    register_residual_block(i, "blk", spec);
  });
  zero_all(store, "conv");

  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 4, 6, 6}, 0.1, 2.0);
  Tape tape;
  BoundParams bound(tape, store);
  Tensor y = residual_block(tape.leaf(x), spec, bound, "blk").tensor();
  REQUIRE(y.same_shape(x));
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("residual block shape arithmetic for stride-2 widening") {
  ResidualBlockSpec spec{8, 16, 2};
  ParameterStore store = make_store(7, [&](ParamInit& i) {
    register_residual_block(i, "blk", spec);
  });
  Rng rng(8);
  Tensor x = random_tensor(rng, {1, 8, 32, 32});
  Tape tape;
  BoundParams bound(tape, store);
  Tensor y = residual_block(tape.leaf(x), spec, bound, "blk").tensor();
  CHECK(y.shape() == std::vector<int>{1, 16, 16, 16});

  CHECK_THROWS_AS(
      residual_block(tape.leaf(Tensor::zeros({1, 4, 32, 32})), spec, bound, "blk"),
      std::invalid_argument);
}

TEST_CASE("attention gate degenerate parameterizations") {
  AttentionGateSpec spec{3, 3};
  ParameterStore store = make_store(11, [&](ParamInit& i) {
    register_attention_gate(i, "gate", spec);
  });
  Rng rng(12);
  Tensor s = random_tensor(rng, {1, 3, 4, 4});
  Tensor m = random_tensor(rng, {1, 3, 4, 4});

  SUBCASE("zero weights and bias give alpha = 1/2 everywhere") {
    zero_all(store, "gate");
    Tape tape;
    BoundParams bound(tape, store);
    GateOutput out = attention_gate(tape.leaf(s), tape.leaf(m), spec, bound, "gate");
    for (Eigen::Index i = 0; i < out.alpha.tensor().size(); ++i)
      CHECK(out.alpha.tensor()[i] == 0.5);
    for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(out.out.tensor()[i] == 0.5 * s[i]);
  }

  SUBCASE("large positive bias saturates the gate open") {
    zero_all(store, "gate");
    store.value("gate.bias")[0] = 100.0;
    Tape tape;
    BoundParams bound(tape, store);
    GateOutput out = attention_gate(tape.leaf(s), tape.leaf(m), spec, bound, "gate");
    for (Eigen::Index i = 0; i < s.size(); ++i)
      CHECK(std::abs(out.out.tensor()[i] - s[i]) < 1e-10);
  }
}

TEST_CASE("attention gate matches the scripted pipeline and its invariants") {
  AttentionGateSpec spec{2, 2};
  ParameterStore store = make_store(21, [&](ParamInit& i) {
    register_attention_gate(i, "gate", spec);
  });
  Rng rng(22);
  Tensor s = random_tensor(rng, {1, 2, 4, 4}, -2, 2);
  Tensor m = random_tensor(rng, {1, 2, 4, 4}, -2, 2);

  Tape tape;
  BoundParams bound(tape, store);
  GateOutput got = attention_gate(tape.leaf(s), tape.leaf(m), spec, bound, "gate");

  Tensor want_out, want_alpha;
  naive_gate(s, m, store.value("gate.weight"), store.value("gate.bias"), &want_out, &want_alpha);

  for (Eigen::Index i = 0; i < want_alpha.size(); ++i) {
    CHECK(got.alpha.tensor()[i] == doctest::Approx(want_alpha[i]).epsilon(1e-12));
    CHECK(got.alpha.tensor()[i] > 0.0);
    CHECK(got.alpha.tensor()[i] < 1.0);
  }
  for (Eigen::Index i = 0; i < want_out.size(); ++i) {
    CHECK(got.out.tensor()[i] == doctest::Approx(want_out[i]).epsilon(1e-12));
    CHECK(std::abs(got.out.tensor()[i]) <= std::abs(s[i]));
  }

  CHECK_THROWS_AS(
      attention_gate(tape.leaf(s), tape.leaf(Tensor::zeros({1, 2, 5, 4})), spec, bound, "gate"),
      std::invalid_argument);
}

TEST_CASE("dspp keeps a constant input constant away from the borders") {
  DsppSpec spec{{1, 2, 4}, 3};
  const int in_ch = 2;
  ParameterStore store = make_store(31, [&](ParamInit& i) {
    register_dspp(i, "dspp", spec, in_ch);
  });
  // Bias 0, every 3x3 kernel summing to q per input channel, pool/fuse
  // kernels constant: the interior response of every branch is constant,
  // so the fused interior is too.
  const double q = 0.04, p = 0.3, f = 0.25;
  for (size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    if (e.name.find("bias") != std::string::npos) e.value.array().setZero();
  }
  for (int rate : {1, 2, 4})
    store.value("dspp.rate" + std::to_string(rate) + ".weight").array().setConstant(q / 9.0);
  store.value("dspp.pool.weight").array().setConstant(p);
  store.value("dspp.fuse.weight").array().setConstant(f);

  const double c = 0.7;
  Tape tape;
  BoundParams bound(tape, store);
  Tensor y = dspp(tape.leaf(Tensor::full({1, in_ch, 16, 16}, c)), spec, bound, "dspp").tensor();
  CHECK(y.shape() == std::vector<int>{1, 3, 16, 16});

  // dilated branches: c*q*in_ch; pool branch: c*p*in_ch; fuse sums
  // out_channels copies of each branch value times f.
  double branch = c * q * in_ch;
  double pool = c * p * in_ch;
  double expected = f * spec.out_channels * (3 * branch + pool);
  const int margin = 4;  // largest dilation
  for (int h = margin; h < 16 - margin; ++h)
    for (int w = margin; w < 16 - margin; ++w)
      for (int k = 0; k < 3; ++k)
        CHECK(y.at4(0, k, h, w) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dilated convolution equals plain convolution with an expanded kernel") {
  Rng rng(41);
  Tensor x = random_tensor(rng, {1, 1, 5, 5});
  Tensor k = random_tensor(rng, {1, 1, 3, 3});
  Tensor b = random_tensor(rng, {1});

  for (int d : {2, 3}) {
    // zero-interleave: 3x3 taps spread to a (2d+1)x(2d+1) grid
    int ek = 2 * d + 1;
    Tensor expanded({1, 1, ek, ek});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) expanded.at4(0, 0, i * d, j * d) = k.at4(0, 0, i, j);

    Tape tape;
    Tensor dilated =
        conv2d(tape.leaf(x), tape.leaf(k), tape.leaf(b), Conv2dOpts{1, d, d}).tensor();
    Tensor plain =
        conv2d(tape.leaf(x), tape.leaf(expanded), tape.leaf(b), Conv2dOpts{1, 1, d}).tensor();
    REQUIRE(dilated.same_shape(plain));
    for (Eigen::Index i = 0; i < dilated.size(); ++i)
      CHECK(dilated[i] == doctest::Approx(plain[i]).epsilon(1e-12));
  }
}

TEST_CASE("dspp output shape holds for other rate lists") {
  DsppSpec spec{{1, 3}, 5};
  ParameterStore store = make_store(51, [&](ParamInit& i) {
    register_dspp(i, "dspp", spec, 3);
  });
  Rng rng(52);
  Tape tape;
  BoundParams bound(tape, store);
  Tensor y = dspp(tape.leaf(random_tensor(rng, {2, 3, 8, 8})), spec, bound, "dspp").tensor();
  CHECK(y.shape() == std::vector<int>{2, 5, 8, 8});

  CHECK_THROWS_AS(DsppSpec({{2, 4}, 5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(DsppSpec({{1, 1}, 5}).validate(), std::invalid_argument);
}

TEST_CASE("parameter init: determinism, seed sensitivity, He variance") {
  NetworkSpec spec;
  ParameterStore a = init_parameters(spec, 9);
  ParameterStore b = init_parameters(spec, 9);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entry(i).name == b.entry(i).name);
    REQUIRE(a.entry(i).value.size() == b.entry(i).value.size());
    for (Eigen::Index j = 0; j < a.entry(i).value.size(); ++j)
      CHECK(a.entry(i).value[j] == b.entry(i).value[j]);
  }

  ParameterStore c = init_parameters(spec, 10);
  bool any_diff = false;
  for (size_t i = 0; i < a.size() && !any_diff; ++i)
    for (Eigen::Index j = 0; j < a.entry(i).value.size(); ++j)
      if (a.entry(i).value[j] != c.entry(i).value[j]) {
        any_diff = true;
        break;
      }
  CHECK(any_diff);

  // enc4 kernels have fan_in 128*9 and >100k draws: the sample variance
  // must sit within 20% of 2/fan_in.
  const Tensor& w = a.value("enc4.block1.conv1.weight");
  REQUIRE(w.size() >= 10000);
  double mean = w.array().mean();
  double var = (w.array() - mean).square().mean();
  double want = 2.0 / (128.0 * 9.0);
  CHECK(var > 0.8 * want);
  CHECK(var < 1.2 * want);

  // norm scales start at one, shifts and biases at zero
  CHECK((a.value("enc1.block1.norm1.gamma").array() == 1.0).all());
  CHECK((a.value("enc1.block1.norm1.beta").array() == 0.0).all());
  CHECK((a.value("main.head.bias").array() == 0.0).all());
}
