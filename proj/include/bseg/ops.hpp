#pragma once

#include "bseg/tape.hpp"

namespace bseg {

struct Conv2dOpts {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

// Output spatial size of a zero-padded cross-correlation.
int conv_out_size(int in, int kernel, int stride, int dilation, int padding);

// input [N,C,H,W], kernel [K,C,kh,kw], bias [K] -> [N,K,H',W'].
Value conv2d(const Value& input, const Value& kernel, const Value& bias,
             const Conv2dOpts& opts = {});

Value sigmoid(const Value& x);
Value relu(const Value& x);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value eltwise_mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);

Value scale(const Value& x, Scalar c);
Value add_scalar(const Value& x, Scalar c);
Value log(const Value& x);
Value clamp(const Value& x, Scalar lo, Scalar hi);

// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
Value concat_channels(const Value& a, const Value& b);

// Bilinear interpolation, half-pixel centers. Same-size resize is an exact
// identity.
Value resize_bilinear(const Value& x, int out_h, int out_w);

// [N,C,H,W] -> [N,C,1,1]
Value global_avg_pool(const Value& x);

Value sum(const Value& x);
Value mean(const Value& x);

// x [N,C,H,W] * map [N,1,H,W], map broadcast across channels.
Value broadcast_mul(const Value& x, const Value& map);

// Per-sample, per-channel standardization with learned scale/shift.
// gamma, beta have shape [C].
Value instance_norm(const Value& x, const Value& gamma, const Value& beta,
                    Scalar eps = 1e-5);

}  // namespace bseg
