#pragma once

#include "bseg/blocks.hpp"

#include <cstdint>
#include <vector>

namespace bseg {

// Two-stream architecture: an encoder-decoder main stream for the semantic
// mask and a boundary (shape) stream of three attention gates running at the
// first three encoder resolutions, fused with the encoder bottleneck through
// dilated spatial pyramid pooling.
struct NetworkSpec {
  int levels = 4;
  int base_channels = 16;
  int shape_channels = 8;
  DsppSpec dspp{};  // out_channels <= 0 means "bottleneck width"
  int in_channels = 1;
  int out_classes = 1;

  int level_channels(int level) const { return base_channels << (level - 1); }
  int bottleneck_channels() const { return level_channels(levels); }
  int dspp_out_channels() const {
    return dspp.out_channels > 0 ? dspp.out_channels : bottleneck_channels();
  }
  int downsample_factor() const { return 1 << (levels - 1); }

  void validate() const;
};

struct ForwardOutput {
  Value y_logits;             // [N,1,H,W] semantic logits from the main stream
  Value s_logits;             // [N,1,H,W] boundary logits, resized from the shape stream
  std::vector<Value> alphas;  // 3 attention maps at the gates' native resolutions
};

ParameterStore init_parameters(const NetworkSpec& spec, uint64_t seed);

ForwardOutput forward(Tape& tape, const Tensor& x, const NetworkSpec& spec,
                      const BoundParams& params);

// Convenience wrapper that binds the store itself; for inference-style calls.
ForwardOutput forward(Tape& tape, const Tensor& x, const NetworkSpec& spec,
                      const ParameterStore& store);

}  // namespace bseg
