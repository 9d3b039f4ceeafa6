#pragma once

#include "bseg/ops.hpp"
#include "bseg/params.hpp"

#include <string>
#include <vector>

namespace bseg {

struct ResidualBlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;

  // Skip path needs a 1x1 projection whenever shapes differ at the add.
  bool needs_projection() const { return stride != 1 || in_channels != out_channels; }
};

struct AttentionGateSpec {
  int channels = 0;       // shape-stream width
  int gate_channels = 0;  // width of the gating feature
};

struct DsppSpec {
  std::vector<int> dilation_rates{1, 2, 4};
  int out_channels = 0;

  void validate() const;
};

void register_residual_block(ParamInit& init, const std::string& prefix,
                             const ResidualBlockSpec& spec);

// Pre-activation ordering: norm -> relu -> conv3x3 -> norm -> relu -> conv3x3,
// plus identity or projected skip. With zeroed conv weights and an identity
// skip this is an exact identity.
Value residual_block(const Value& input, const ResidualBlockSpec& spec, const BoundParams& params,
                     const std::string& prefix);

void register_attention_gate(ParamInit& init, const std::string& prefix,
                             const AttentionGateSpec& spec);

struct GateOutput {
  Value out;    // gated shape-stream feature, same shape as s
  Value alpha;  // single-channel attention map in (0,1)
};

// alpha = sigmoid(conv1x1(s ++ m)); out = s (*) alpha, alpha broadcast
// across the channels of s.
GateOutput attention_gate(const Value& s, const Value& m, const AttentionGateSpec& spec,
                          const BoundParams& params, const std::string& prefix);

void register_dspp(ParamInit& init, const std::string& prefix, const DsppSpec& spec,
                   int in_channels);

// Parallel 3x3 convolutions at each dilation rate plus a pooled 1x1 branch
// resized back, channel-concatenated and fused by a 1x1 convolution.
Value dspp(const Value& input, const DsppSpec& spec, const BoundParams& params,
           const std::string& prefix);

}  // namespace bseg
