#include "bseg/losses.hpp"

#include <stdexcept>

namespace bseg {

namespace {

constexpr Scalar kProbClamp = 1e-7;  // keeps both logs finite in 64-bit

void require_binary_mask(const Tensor& t, const char* what) {
  if (t.rank() != 4 || t.dim(1) != 1)
    throw std::invalid_argument(std::string(what) + " must have shape [N,1,H,W], got " +
                                t.shape_str());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0)
      throw std::invalid_argument(std::string(what) + " is not binary at flat index " +
                                  std::to_string(i));
  }
}

Tensor inner_boundary(const Tensor& mask) {
  const int N = mask.dim(0), H = mask.dim(2), W = mask.dim(3);
  Tensor edge({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        if (mask.at4(n, 0, h, w) == 0.0) continue;
        bool background_neighbor =
            (h == 0 || mask.at4(n, 0, h - 1, w) == 0.0) ||
            (h == H - 1 || mask.at4(n, 0, h + 1, w) == 0.0) ||
            (w == 0 || mask.at4(n, 0, h, w - 1) == 0.0) ||
            (w == W - 1 || mask.at4(n, 0, h, w + 1) == 0.0);
        if (background_neighbor) edge.at4(n, 0, h, w) = 1.0;
      }
    }
  }
  return edge;
}

Value clamped_probs(const Value& pred) {
  return clamp(pred, kProbClamp, 1.0 - kProbClamp);
}

// -sum(log(p) * w_edge) - sum(log(1-p) * w_non) with per-pixel weights.
Value weighted_edge_bce(const Value& s_pred, const Tensor& w_edge, const Tensor& w_non) {
  Tape& tape = *s_pred.tape();
  Value p = clamped_probs(s_pred);
  Value pos = sum(eltwise_mul(log(p), tape.leaf(w_edge)));
  Value neg = sum(eltwise_mul(log(add_scalar(scale(p, -1.0), 1.0)), tape.leaf(w_non)));
  return add(scale(pos, -1.0), scale(neg, -1.0));
}

}  // namespace

EdgeTarget extract_edge_target(const Tensor& y_true) {
  require_binary_mask(y_true, "extract_edge_target input");
  Tensor edge = inner_boundary(y_true);
  double zeros = static_cast<double>(edge.size()) - edge.array().sum();
  return EdgeTarget{std::move(edge), zeros / static_cast<double>(y_true.size())};
}

Value dice_loss(const Value& y_pred, const Tensor& y_true, double epsilon) {
  Tape& tape = *y_pred.tape();
  if (!y_pred.tensor().same_shape(y_true))
    throw std::invalid_argument("dice_loss: shape mismatch " + y_pred.tensor().shape_str() +
                                " vs " + y_true.shape_str());
  Value target = tape.leaf(y_true);
  Value numer = scale(sum(eltwise_mul(y_pred, target)), 2.0);
  double target_sq = y_true.array().square().sum();
  Value denom = add_scalar(sum(eltwise_mul(y_pred, y_pred)), target_sq + epsilon);
  return add_scalar(scale(div(numer, denom), -1.0), 1.0);
}

Value edge_loss(const Value& s_pred, const EdgeTarget& target) {
  if (!s_pred.tensor().same_shape(target.s_true))
    throw std::invalid_argument("edge_loss: shape mismatch " + s_pred.tensor().shape_str() +
                                " vs " + target.s_true.shape_str());
  Tape& tape = *s_pred.tape();
  Value p = clamped_probs(s_pred);
  Value pos = sum(eltwise_mul(log(p), tape.leaf(target.s_true)));
  Tensor non_edge(target.s_true.shape(), 1.0 - target.s_true.array());
  Value neg = sum(eltwise_mul(log(add_scalar(scale(p, -1.0), 1.0)), tape.leaf(non_edge)));
  return add(scale(pos, -target.beta), scale(neg, -(1.0 - target.beta)));
}

TotalLoss total_loss(const ForwardOutput& out, const Tensor& y_true, const LossWeights& weights,
                     bool per_image_beta) {
  Tape& tape = *out.y_logits.tape();
  Value y_pred = sigmoid(out.y_logits);
  Value s_pred = sigmoid(out.s_logits);

  EdgeTarget target = extract_edge_target(y_true);

  Value dice_main = dice_loss(y_pred, y_true, weights.epsilon);
  Value dice_shape = dice_loss(s_pred, target.s_true, weights.epsilon);

  Value edge;
  if (per_image_beta) {
    // Same boundary map; the class-balance weight is recomputed per image.
    const Tensor& e = target.s_true;
    const int n_samples = e.dim(0);
    const Eigen::Index per = e.size() / n_samples;
    Tensor w_edge(e.shape()), w_non(e.shape());
    for (int n = 0; n < n_samples; ++n) {
      double edge_px = e.array().segment(n * per, per).sum();
      double beta_n = 1.0 - edge_px / static_cast<double>(per);
      w_edge.array().segment(n * per, per) = beta_n * e.array().segment(n * per, per);
      w_non.array().segment(n * per, per) =
          (1.0 - beta_n) * (1.0 - e.array().segment(n * per, per));
    }
    edge = weighted_edge_bce(s_pred, w_edge, w_non);
  } else {
    edge = edge_loss(s_pred, target);
  }

  TotalLoss result;
  result.dice_main = dice_main.tensor()[0];
  result.dice_shape = dice_shape.tensor()[0];
  result.edge = edge.tensor()[0];

  // Zero-weight terms never enter the graph that backward() sees.
  Value total;
  auto accumulate = [&](const Value& term, double lambda) {
    if (lambda == 0.0) return;
    Value scaled = lambda == 1.0 ? term : scale(term, lambda);
    total = total.valid() ? add(total, scaled) : scaled;
  };
  accumulate(dice_main, weights.lambda1);
  accumulate(dice_shape, weights.lambda2);
  accumulate(edge, weights.lambda3);
  if (!total.valid()) total = tape.leaf(Tensor::scalar(0.0));
  result.total = total;
  return result;
}

}  // namespace bseg
