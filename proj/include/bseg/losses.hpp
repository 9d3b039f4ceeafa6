#pragma once

#include "bseg/network.hpp"
#include "bseg/ops.hpp"

namespace bseg {

struct LossWeights {
  double lambda1 = 1.0;  // main-stream soft Dice
  double lambda2 = 0.5;  // shape-stream soft Dice
  double lambda3 = 0.1;  // class-balanced boundary cross entropy
  double epsilon = 1e-5;
};

struct EdgeTarget {
  Tensor s_true;  // [N,1,H,W], values in {0,1}
  double beta;    // fraction of non-edge pixels
};

// Inner 4-neighbor boundary of a binary mask: a pixel is edge iff it is
// foreground and at least one 4-neighbor (out of bounds counts as
// background) is background.
EdgeTarget extract_edge_target(const Tensor& y_true);

// 1 - 2*sum(t*p) / (sum(t^2) + sum(p^2) + eps). y_pred must already be a
// probability; y_true is a constant.
Value dice_loss(const Value& y_pred, const Tensor& y_true, double epsilon);

// -beta * sum_{edge} log(p) - (1-beta) * sum_{non-edge} log(1-p), with p
// clamped to [1e-7, 1-1e-7] before the logs.
Value edge_loss(const Value& s_pred, const EdgeTarget& target);

struct TotalLoss {
  Value total;
  double dice_main = 0.0;
  double dice_shape = 0.0;
  double edge = 0.0;
};

// Weighted sum of the three terms. Terms with a zero weight are left out of
// the gradient path entirely (their component values are still reported),
// so the lambda2=lambda3=0 configuration degenerates bit-exactly to a plain
// Dice objective.
TotalLoss total_loss(const ForwardOutput& out, const Tensor& y_true, const LossWeights& weights,
                     bool per_image_beta = false);

}  // namespace bseg
