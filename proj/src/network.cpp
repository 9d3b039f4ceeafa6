#include "bseg/network.hpp"

#include <stdexcept>
#include <string>

namespace bseg {

namespace {

constexpr int kGateCount = 3;
constexpr uint64_t kInitStream = 0x494e4954;  // distinct stream tag for init draws

std::string enc(int level) { return "enc" + std::to_string(level); }
std::string dec(int level) { return "dec" + std::to_string(level); }

ResidualBlockSpec block1_spec(const NetworkSpec& s, int level) {
  int in = level == 1 ? s.in_channels : s.level_channels(level);
  return ResidualBlockSpec{in, s.level_channels(level), 1};
}

}  // namespace

void NetworkSpec::validate() const {
  if (levels < kGateCount)
    throw std::invalid_argument("network: needs at least 3 levels, got " + std::to_string(levels));
  if (base_channels < 1 || shape_channels < 1 || in_channels < 1 || out_classes != 1)
    throw std::invalid_argument("network: invalid channel configuration");
  DsppSpec resolved = dspp;
  resolved.out_channels = dspp_out_channels();
  resolved.validate();
}

ParameterStore init_parameters(const NetworkSpec& spec, uint64_t seed) {
  NetworkSpec s = spec;
  s.dspp.out_channels = spec.dspp_out_channels();
  s.validate();

  ParameterStore store;
  Rng rng(mix_seed(seed, kInitStream));
  ParamInit init{store, rng};

  // Encoder: two residual blocks per level, stride-2 conv between levels.
  for (int level = 1; level <= s.levels; ++level) {
    int w = s.level_channels(level);
    register_residual_block(init, enc(level) + ".block1", block1_spec(s, level));
    register_residual_block(init, enc(level) + ".block2", ResidualBlockSpec{w, w, 1});
    if (level < s.levels) init.conv(enc(level) + ".down", s.level_channels(level + 1), w, 3, 3);
  }

  // Shape stream: seed projection plus, per gate, a tap projection, the gate
  // itself and (after gates 1 and 2) a stride-2 connection residual block.
  int sc = s.shape_channels;
  init.conv("shape.seed", sc, s.level_channels(1), 1, 1);
  for (int g = 1; g <= kGateCount; ++g) {
    init.conv("shape.tap" + std::to_string(g), sc, s.level_channels(g), 1, 1);
    register_attention_gate(init, "shape.gate" + std::to_string(g), AttentionGateSpec{sc, sc});
    if (g < kGateCount)
      register_residual_block(init, "shape.conn" + std::to_string(g),
                              ResidualBlockSpec{sc, sc, 2});
  }
  // The boundary head reads the gated features raw: where the gate is shut
  // the head sees exactly its bias, so boundary evidence has to flow through
  // an open gate rather than a re-centered constant.
  init.conv("shape.head", s.out_classes, sc, 1, 1);

  register_dspp(init, "dspp", s.dspp, s.bottleneck_channels() + sc);

  // Decoder: upsample, concatenate the skip, one residual block per level.
  int carry = s.dspp.out_channels;
  for (int level = s.levels - 1; level >= 1; --level) {
    int w = s.level_channels(level);
    register_residual_block(init, dec(level), ResidualBlockSpec{carry + w, w, 1});
    carry = w;
  }
  init.norm("main.head_norm", s.level_channels(1));
  init.conv("main.head", s.out_classes, s.level_channels(1), 1, 1);

  return store;
}

ForwardOutput forward(Tape& tape, const Tensor& x, const NetworkSpec& spec,
                      const BoundParams& params) {
  NetworkSpec s = spec;
  s.dspp.out_channels = spec.dspp_out_channels();
  s.validate();
  if (x.rank() != 4 || x.dim(1) != s.in_channels)
    throw std::invalid_argument("forward: expected input [N," + std::to_string(s.in_channels) +
                                ",H,W], got " + x.shape_str());
  const int height = x.dim(2), width = x.dim(3);
  const int factor = s.downsample_factor();
  if (height % factor != 0 || width % factor != 0)
    throw std::invalid_argument("forward: spatial size " + x.shape_str() +
                                " not divisible by " + std::to_string(factor));

  Value cur = tape.leaf(x);

  // Encoder; keep each level's output for skips and shape-stream taps.
  std::vector<Value> enc_out(static_cast<size_t>(s.levels) + 1);
  for (int level = 1; level <= s.levels; ++level) {
    cur = residual_block(cur, block1_spec(s, level), params, enc(level) + ".block1");
    cur = residual_block(cur, ResidualBlockSpec{s.level_channels(level), s.level_channels(level), 1},
                         params, enc(level) + ".block2");
    enc_out[static_cast<size_t>(level)] = cur;
    if (level < s.levels) {
      cur = conv2d(cur, params[enc(level) + ".down.weight"], params[enc(level) + ".down.bias"],
                   Conv2dOpts{2, 1, 1});
    }
  }
  Value bottleneck = enc_out[static_cast<size_t>(s.levels)];

  // Shape stream, descending with the first three encoder resolutions. Every
  // gate combines the running stream with that level's projected tap.
  int sc = s.shape_channels;
  Value stream = conv2d(enc_out[1], params["shape.seed.weight"], params["shape.seed.bias"]);
  std::vector<Value> alphas;
  Value gated;
  for (int g = 1; g <= kGateCount; ++g) {
    std::string tag = std::to_string(g);
    Value tap = conv2d(enc_out[static_cast<size_t>(g)], params["shape.tap" + tag + ".weight"],
                       params["shape.tap" + tag + ".bias"]);
    GateOutput go =
        attention_gate(stream, tap, AttentionGateSpec{sc, sc}, params, "shape.gate" + tag);
    alphas.push_back(go.alpha);
    gated = go.out;
    if (g < kGateCount)
      stream = residual_block(gated, ResidualBlockSpec{sc, sc, 2}, params, "shape.conn" + tag);
  }

  Value s_logits = conv2d(gated, params["shape.head.weight"], params["shape.head.bias"]);
  s_logits = resize_bilinear(s_logits, height, width);

  // Fuse the shape stream with the encoder bottleneck.
  Value shape_at_bottleneck =
      resize_bilinear(gated, bottleneck.tensor().dim(2), bottleneck.tensor().dim(3));
  Value fused = dspp(concat_channels(bottleneck, shape_at_bottleneck), s.dspp, params, "dspp");

  // Decoder back to full resolution.
  Value carry = fused;
  for (int level = s.levels - 1; level >= 1; --level) {
    const Value& skip = enc_out[static_cast<size_t>(level)];
    carry = resize_bilinear(carry, skip.tensor().dim(2), skip.tensor().dim(3));
    carry = concat_channels(carry, skip);
    int w = s.level_channels(level);
    carry = residual_block(carry, ResidualBlockSpec{carry.tensor().dim(1), w, 1}, params,
                           dec(level));
  }
  carry = instance_norm(carry, params["main.head_norm.gamma"], params["main.head_norm.beta"]);
  Value y_logits = conv2d(carry, params["main.head.weight"], params["main.head.bias"]);

  return ForwardOutput{y_logits, s_logits, std::move(alphas)};
}

ForwardOutput forward(Tape& tape, const Tensor& x, const NetworkSpec& spec,
                      const ParameterStore& store) {
  BoundParams bound(tape, store);
  return forward(tape, x, spec, bound);
}

}  // namespace bseg
