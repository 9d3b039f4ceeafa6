#include "bseg/blocks.hpp"

#include <stdexcept>

namespace bseg {

void DsppSpec::validate() const {
  if (dilation_rates.empty() || dilation_rates.front() != 1)
    throw std::invalid_argument("dspp: dilation rates must start at 1");
  for (size_t i = 1; i < dilation_rates.size(); ++i) {
    if (dilation_rates[i] <= dilation_rates[i - 1])
      throw std::invalid_argument("dspp: dilation rates must be strictly increasing");
  }
  if (out_channels <= 0) throw std::invalid_argument("dspp: out_channels must be positive");
}

void register_residual_block(ParamInit& init, const std::string& prefix,
                             const ResidualBlockSpec& spec) {
  init.norm(prefix + ".norm1", spec.in_channels);
  init.conv(prefix + ".conv1", spec.out_channels, spec.in_channels, 3, 3);
  init.norm(prefix + ".norm2", spec.out_channels);
  init.conv(prefix + ".conv2", spec.out_channels, spec.out_channels, 3, 3);
  if (spec.needs_projection()) init.conv(prefix + ".proj", spec.out_channels, spec.in_channels, 1, 1);
}

Value residual_block(const Value& input, const ResidualBlockSpec& spec, const BoundParams& params,
                     const std::string& prefix) {
  if (input.tensor().dim(1) != spec.in_channels)
    throw std::invalid_argument("residual_block " + prefix + ": expected " +
                                std::to_string(spec.in_channels) + " input channels, got " +
                                std::to_string(input.tensor().dim(1)));
  Conv2dOpts c1{spec.stride, 1, 1};
  Conv2dOpts c2{1, 1, 1};
  Value h = instance_norm(input, params[prefix + ".norm1.gamma"], params[prefix + ".norm1.beta"]);
  h = relu(h);
  h = conv2d(h, params[prefix + ".conv1.weight"], params[prefix + ".conv1.bias"], c1);
  h = instance_norm(h, params[prefix + ".norm2.gamma"], params[prefix + ".norm2.beta"]);
  h = relu(h);
  h = conv2d(h, params[prefix + ".conv2.weight"], params[prefix + ".conv2.bias"], c2);

  Value skip = input;
  if (spec.needs_projection()) {
    skip = conv2d(input, params[prefix + ".proj.weight"], params[prefix + ".proj.bias"],
                  Conv2dOpts{spec.stride, 1, 0});
  }
  return add(h, skip);
}

void register_attention_gate(ParamInit& init, const std::string& prefix,
                             const AttentionGateSpec& spec) {
  // Single-channel map, broadcast over the stream's channels.
  init.conv(prefix, 1, spec.channels + spec.gate_channels, 1, 1);
}

GateOutput attention_gate(const Value& s, const Value& m, const AttentionGateSpec& spec,
                          const BoundParams& params, const std::string& prefix) {
  const Tensor& sv = s.tensor();
  const Tensor& mv = m.tensor();
  if (sv.dim(0) != mv.dim(0) || sv.dim(2) != mv.dim(2) || sv.dim(3) != mv.dim(3))
    throw std::invalid_argument("attention_gate " + prefix + ": spatial mismatch " +
                                sv.shape_str() + " vs " + mv.shape_str());
  Value cat = concat_channels(s, m);
  Value alpha = sigmoid(conv2d(cat, params[prefix + ".weight"], params[prefix + ".bias"]));
  return GateOutput{broadcast_mul(s, alpha), alpha};
}

void register_dspp(ParamInit& init, const std::string& prefix, const DsppSpec& spec,
                   int in_channels) {
  spec.validate();
  for (int rate : spec.dilation_rates) {
    init.conv(prefix + ".rate" + std::to_string(rate), spec.out_channels, in_channels, 3, 3);
  }
  init.conv(prefix + ".pool", spec.out_channels, in_channels, 1, 1);
  int cat_channels = spec.out_channels * static_cast<int>(spec.dilation_rates.size() + 1);
  init.conv(prefix + ".fuse", spec.out_channels, cat_channels, 1, 1);
}

Value dspp(const Value& input, const DsppSpec& spec, const BoundParams& params,
           const std::string& prefix) {
  spec.validate();
  const int h = input.tensor().dim(2), w = input.tensor().dim(3);
  Value merged;
  for (int rate : spec.dilation_rates) {
    std::string name = prefix + ".rate" + std::to_string(rate);
    Value branch =
        conv2d(input, params[name + ".weight"], params[name + ".bias"], Conv2dOpts{1, rate, rate});
    merged = merged.valid() ? concat_channels(merged, branch) : branch;
  }
  Value pooled = global_avg_pool(input);
  pooled = conv2d(pooled, params[prefix + ".pool.weight"], params[prefix + ".pool.bias"]);
  pooled = resize_bilinear(pooled, h, w);
  merged = concat_channels(merged, pooled);
  return conv2d(merged, params[prefix + ".fuse.weight"], params[prefix + ".fuse.bias"]);
}

}  // namespace bseg
