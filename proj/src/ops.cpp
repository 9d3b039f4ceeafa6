#include "bseg/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bseg {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajorMap = Eigen::Map<const RowMajorMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Tape& tape_of(const Value& v) {
  if (!v.valid()) throw std::logic_error("op applied to unbound Value");
  return *v.tape();
}

Tape& same_tape(const Value& a, const Value& b) {
  Tape& t = tape_of(a);
  if (&t != &tape_of(b)) throw std::logic_error("op inputs live on different tapes");
  return t;
}

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw std::invalid_argument(std::string(what) + " must be rank 4, got shape " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

// Gathers receptive fields of one sample into a [C*kh*kw, H'*W'] matrix,
// out-of-bounds taps as zeros.
void im2col(const Tensor& input, int n, int kh, int kw, const Conv2dOpts& o, int out_h, int out_w,
            Eigen::MatrixXd& cols) {
  const int C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Scalar* base = input.data() + static_cast<Eigen::Index>(n) * C * H * W;
  for (int oh = 0; oh < out_h; ++oh) {
    for (int ow = 0; ow < out_w; ++ow) {
      Scalar* col = cols.col(static_cast<Eigen::Index>(oh) * out_w + ow).data();
      Eigen::Index ck = 0;
      for (int c = 0; c < C; ++c) {
        const Scalar* plane = base + static_cast<Eigen::Index>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
          int ih = oh * o.stride - o.padding + ki * o.dilation;
          for (int kj = 0; kj < kw; ++kj, ++ck) {
            int iw = ow * o.stride - o.padding + kj * o.dilation;
            col[ck] = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                          ? plane[static_cast<Eigen::Index>(ih) * W + iw]
                          : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add counterpart of im2col.
void col2im_add(const Eigen::MatrixXd& cols, int n, int kh, int kw, const Conv2dOpts& o, int out_h,
                int out_w, Tensor& grad_input) {
  const int C = grad_input.dim(1), H = grad_input.dim(2), W = grad_input.dim(3);
  Scalar* base = grad_input.data() + static_cast<Eigen::Index>(n) * C * H * W;
  for (int oh = 0; oh < out_h; ++oh) {
    for (int ow = 0; ow < out_w; ++ow) {
      const Scalar* col = cols.col(static_cast<Eigen::Index>(oh) * out_w + ow).data();
      Eigen::Index ck = 0;
      for (int c = 0; c < C; ++c) {
        Scalar* plane = base + static_cast<Eigen::Index>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
          int ih = oh * o.stride - o.padding + ki * o.dilation;
          for (int kj = 0; kj < kw; ++kj, ++ck) {
            int iw = ow * o.stride - o.padding + kj * o.dilation;
            if (ih >= 0 && ih < H && iw >= 0 && iw < W)
              plane[static_cast<Eigen::Index>(ih) * W + iw] += col[ck];
          }
        }
      }
    }
  }
}

struct ResizePlan {
  std::vector<int> lo, hi;
  std::vector<Scalar> t;
};

// Half-pixel-center source coordinates, clamped at the borders.
ResizePlan plan_axis(int in_size, int out_size) {
  ResizePlan p;
  p.lo.resize(static_cast<size_t>(out_size));
  p.hi.resize(static_cast<size_t>(out_size));
  p.t.resize(static_cast<size_t>(out_size));
  Scalar scl = static_cast<Scalar>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    Scalar s = (i + 0.5) * scl - 0.5;
    Scalar f = std::floor(s);
    int lo = static_cast<int>(f);
    p.t[static_cast<size_t>(i)] = s - f;
    p.lo[static_cast<size_t>(i)] = std::min(std::max(lo, 0), in_size - 1);
    p.hi[static_cast<size_t>(i)] = std::min(std::max(lo + 1, 0), in_size - 1);
  }
  return p;
}

}  // namespace

int conv_out_size(int in, int kernel, int stride, int dilation, int padding) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

Value conv2d(const Value& input, const Value& kernel, const Value& bias, const Conv2dOpts& opts) {
  same_tape(input, kernel);
  Tape& tape = same_tape(input, bias);
  const Tensor& x = input.tensor();
  const Tensor& k = kernel.tensor();
  const Tensor& b = bias.tensor();
  require_rank4(x, "conv2d input");
  require_rank4(k, "conv2d kernel");
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0)
    throw std::invalid_argument("conv2d: invalid stride/dilation/padding");
  if (x.dim(1) != k.dim(1))
    throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(1)) +
                                " do not match kernel channels " + std::to_string(k.dim(1)));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (b.rank() != 1 || b.dim(0) != K)
    throw std::invalid_argument("conv2d: bias shape " + b.shape_str() + " does not match " +
                                std::to_string(K) + " output channels");
  const int out_h = conv_out_size(H, kh, opts.stride, opts.dilation, opts.padding);
  const int out_w = conv_out_size(W, kw, opts.stride, opts.dilation, opts.padding);
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("conv2d: output would be empty for input " + x.shape_str());

  const Eigen::Index ckk = static_cast<Eigen::Index>(C) * kh * kw;
  const Eigen::Index pix = static_cast<Eigen::Index>(out_h) * out_w;

  Tensor out({N, K, out_h, out_w});
  {
    ConstRowMajorMap wmat(k.data(), K, ckk);
    ConstVecMap bvec(b.data(), K);
    Eigen::MatrixXd cols(ckk, pix);
    for (int n = 0; n < N; ++n) {
      im2col(x, n, kh, kw, opts, out_h, out_w, cols);
      RowMajorMap omat(out.data() + static_cast<Eigen::Index>(n) * K * pix, K, pix);
      omat.noalias() = wmat * cols;
      omat.colwise() += bvec;
    }
  }

  const int in_id = input.id(), k_id = kernel.id(), b_id = bias.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& xv = t.value(in_id);
    const Tensor& kv = t.value(k_id);
    const Tensor& go = t.grad(out_id);
    Tensor& gx = t.grad_acc(in_id);
    Tensor& gk = t.grad_acc(k_id);
    Tensor& gb = t.grad_acc(b_id);
    ConstRowMajorMap wmat(kv.data(), K, ckk);
    RowMajorMap gwmat(gk.data(), K, ckk);
    VecMap gbvec(gb.data(), K);
    Eigen::MatrixXd cols(ckk, pix);
    Eigen::MatrixXd dcols(ckk, pix);
    for (int n = 0; n < N; ++n) {
      ConstRowMajorMap gmat(go.data() + static_cast<Eigen::Index>(n) * K * pix, K, pix);
      gbvec += gmat.rowwise().sum();
      im2col(xv, n, kh, kw, opts, out_h, out_w, cols);
      gwmat.noalias() += gmat * cols.transpose();
      dcols.noalias() = wmat.transpose() * gmat;
      col2im_add(dcols, n, kh, kw, opts, out_h, out_w, gx);
    }
  });
}

Value sigmoid(const Value& x) {
  Tape& tape = tape_of(x);
  const Array& v = x.tensor().array();
  Array y(v.size());
  // exp(-|v|) branch keeps exp from overflowing; the clamp keeps the output
  // strictly inside (0,1) even where exp underflows.
  const Scalar lo = std::numeric_limits<Scalar>::denorm_min();
  const Scalar hi = 1.0 - std::numeric_limits<Scalar>::epsilon() / 2;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Scalar s;
    if (v[i] >= 0) {
      Scalar e = std::exp(-v[i]);
      s = 1.0 / (1.0 + e);
    } else {
      Scalar e = std::exp(v[i]);
      s = e / (1.0 + e);
    }
    y[i] = std::min(std::max(s, lo), hi);
  }
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), std::move(y)), [=](Tape& t) {
    const Array& s = t.value(out_id).array();
    t.grad_acc(in_id).array() += t.grad(out_id).array() * s * (1.0 - s);
  });
}

Value relu(const Value& x) {
  Tape& tape = tape_of(x);
  const Array& v = x.tensor().array();
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), v.max(0.0)), [=](Tape& t) {
    const Array& xv = t.value(in_id).array();
    t.grad_acc(in_id).array() += t.grad(out_id).array() * (xv > 0.0).cast<Scalar>();
  });
}

Value add(const Value& a, const Value& b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.tensor(), b.tensor(), "add");
  const int a_id = a.id(), b_id = b.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(a.tensor().shape(), a.tensor().array() + b.tensor().array()),
                   [=](Tape& t) {
                     t.grad_acc(a_id).array() += t.grad(out_id).array();
                     t.grad_acc(b_id).array() += t.grad(out_id).array();
                   });
}

Value sub(const Value& a, const Value& b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.tensor(), b.tensor(), "sub");
  const int a_id = a.id(), b_id = b.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(a.tensor().shape(), a.tensor().array() - b.tensor().array()),
                   [=](Tape& t) {
                     t.grad_acc(a_id).array() += t.grad(out_id).array();
                     t.grad_acc(b_id).array() -= t.grad(out_id).array();
                   });
}

Value eltwise_mul(const Value& a, const Value& b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.tensor(), b.tensor(), "eltwise_mul");
  const int a_id = a.id(), b_id = b.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(a.tensor().shape(), a.tensor().array() * b.tensor().array()),
                   [=](Tape& t) {
                     const Array& g = t.grad(out_id).array();
                     t.grad_acc(a_id).array() += g * t.value(b_id).array();
                     t.grad_acc(b_id).array() += g * t.value(a_id).array();
                   });
}

Value div(const Value& a, const Value& b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.tensor(), b.tensor(), "div");
  const int a_id = a.id(), b_id = b.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(a.tensor().shape(), a.tensor().array() / b.tensor().array()),
                   [=](Tape& t) {
                     const Array& g = t.grad(out_id).array();
                     const Array& av = t.value(a_id).array();
                     const Array& bv = t.value(b_id).array();
                     t.grad_acc(a_id).array() += g / bv;
                     t.grad_acc(b_id).array() -= g * av / (bv * bv);
                   });
}

Value scale(const Value& x, Scalar c) {
  Tape& tape = tape_of(x);
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), x.tensor().array() * c), [=](Tape& t) {
    t.grad_acc(in_id).array() += t.grad(out_id).array() * c;
  });
}

Value add_scalar(const Value& x, Scalar c) {
  Tape& tape = tape_of(x);
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), x.tensor().array() + c), [=](Tape& t) {
    t.grad_acc(in_id).array() += t.grad(out_id).array();
  });
}

Value log(const Value& x) {
  Tape& tape = tape_of(x);
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), x.tensor().array().log()), [=](Tape& t) {
    t.grad_acc(in_id).array() += t.grad(out_id).array() / t.value(in_id).array();
  });
}

Value clamp(const Value& x, Scalar lo, Scalar hi) {
  Tape& tape = tape_of(x);
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor(x.tensor().shape(), x.tensor().array().max(lo).min(hi)), [=](Tape& t) {
    const Array& xv = t.value(in_id).array();
    t.grad_acc(in_id).array() +=
        t.grad(out_id).array() * ((xv >= lo) && (xv <= hi)).cast<Scalar>();
  });
}

Value concat_channels(const Value& a, const Value& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.tensor();
  const Tensor& bv = b.tensor();
  require_rank4(av, "concat_channels lhs");
  require_rank4(bv, "concat_channels rhs");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: spatial mismatch " + av.shape_str() + " vs " +
                                bv.shape_str());
  const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
  const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
  Tensor out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    Scalar* dst = out.data() + static_cast<Eigen::Index>(n) * (Ca + Cb) * hw;
    std::copy_n(av.data() + static_cast<Eigen::Index>(n) * Ca * hw, Ca * hw, dst);
    std::copy_n(bv.data() + static_cast<Eigen::Index>(n) * Cb * hw, Cb * hw, dst + Ca * hw);
  }
  const int a_id = a.id(), b_id = b.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& go = t.grad(out_id);
    Tensor& ga = t.grad_acc(a_id);
    Tensor& gb = t.grad_acc(b_id);
    for (int n = 0; n < N; ++n) {
      const Scalar* src = go.data() + static_cast<Eigen::Index>(n) * (Ca + Cb) * hw;
      Scalar* da = ga.data() + static_cast<Eigen::Index>(n) * Ca * hw;
      Scalar* db = gb.data() + static_cast<Eigen::Index>(n) * Cb * hw;
      for (Eigen::Index i = 0; i < Ca * hw; ++i) da[i] += src[i];
      for (Eigen::Index i = 0; i < Cb * hw; ++i) db[i] += src[Ca * hw + i];
    }
  });
}

Value resize_bilinear(const Value& x, int out_h, int out_w) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.tensor();
  require_rank4(xv, "resize_bilinear input");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output size must be >= 1");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  ResizePlan py = plan_axis(H, out_h);
  ResizePlan px = plan_axis(W, out_w);

  Tensor out({N, C, out_h, out_w});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const Scalar* in_plane = xv.data() + (static_cast<Eigen::Index>(n) * C + c) * H * W;
      Scalar* out_plane = out.data() + (static_cast<Eigen::Index>(n) * C + c) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const Scalar* r0 = in_plane + static_cast<Eigen::Index>(py.lo[oy]) * W;
        const Scalar* r1 = in_plane + static_cast<Eigen::Index>(py.hi[oy]) * W;
        Scalar ty = py.t[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          int x0 = px.lo[ox], x1 = px.hi[ox];
          Scalar tx = px.t[ox];
          Scalar v0 = r0[x0] + tx * (r0[x1] - r0[x0]);
          Scalar v1 = r1[x0] + tx * (r1[x1] - r1[x0]);
          out_plane[static_cast<Eigen::Index>(oy) * out_w + ox] = v0 + ty * (v1 - v0);
        }
      }
    }
  }

  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& go = t.grad(out_id);
    Tensor& gx = t.grad_acc(in_id);
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const Scalar* g_plane = go.data() + (static_cast<Eigen::Index>(n) * C + c) * out_h * out_w;
        Scalar* gx_plane = gx.data() + (static_cast<Eigen::Index>(n) * C + c) * H * W;
        for (int oy = 0; oy < out_h; ++oy) {
          int y0 = py.lo[oy], y1 = py.hi[oy];
          Scalar ty = py.t[oy];
          for (int ox = 0; ox < out_w; ++ox) {
            int x0 = px.lo[ox], x1 = px.hi[ox];
            Scalar tx = px.t[ox];
            Scalar g = g_plane[static_cast<Eigen::Index>(oy) * out_w + ox];
            gx_plane[static_cast<Eigen::Index>(y0) * W + x0] += g * (1 - ty) * (1 - tx);
            gx_plane[static_cast<Eigen::Index>(y0) * W + x1] += g * (1 - ty) * tx;
            gx_plane[static_cast<Eigen::Index>(y1) * W + x0] += g * ty * (1 - tx);
            gx_plane[static_cast<Eigen::Index>(y1) * W + x1] += g * ty * tx;
          }
        }
      }
    }
  });
}

Value global_avg_pool(const Value& x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.tensor();
  require_rank4(xv, "global_avg_pool input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
  Tensor out({N, C, 1, 1});
  for (Eigen::Index nc = 0; nc < static_cast<Eigen::Index>(N) * C; ++nc) {
    out[nc] = ConstVecMap(xv.data() + nc * hw, hw).mean();
  }
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& go = t.grad(out_id);
    Tensor& gx = t.grad_acc(in_id);
    for (Eigen::Index nc = 0; nc < static_cast<Eigen::Index>(N) * C; ++nc) {
      Scalar g = go[nc] / static_cast<Scalar>(hw);
      VecMap(gx.data() + nc * hw, hw).array() += g;
    }
  });
}

Value sum(const Value& x) {
  Tape& tape = tape_of(x);
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor::scalar(x.tensor().array().sum()), [=](Tape& t) {
    t.grad_acc(in_id).array() += t.grad(out_id)[0];
  });
}

Value mean(const Value& x) {
  Tape& tape = tape_of(x);
  const Eigen::Index n = x.tensor().size();
  const int in_id = x.id();
  const int out_id = tape.node_count();
  return tape.emit(Tensor::scalar(x.tensor().array().mean()), [=](Tape& t) {
    t.grad_acc(in_id).array() += t.grad(out_id)[0] / static_cast<Scalar>(n);
  });
}

Value broadcast_mul(const Value& x, const Value& map) {
  Tape& tape = same_tape(x, map);
  const Tensor& xv = x.tensor();
  const Tensor& mv = map.tensor();
  require_rank4(xv, "broadcast_mul input");
  require_rank4(mv, "broadcast_mul map");
  if (mv.dim(1) != 1 || mv.dim(0) != xv.dim(0) || mv.dim(2) != xv.dim(2) ||
      mv.dim(3) != xv.dim(3))
    throw std::invalid_argument("broadcast_mul: map shape " + mv.shape_str() +
                                " incompatible with input " + xv.shape_str());
  const int N = xv.dim(0), C = xv.dim(1);
  const Eigen::Index hw = static_cast<Eigen::Index>(xv.dim(2)) * xv.dim(3);
  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n) {
    ConstVecMap m(mv.data() + static_cast<Eigen::Index>(n) * hw, hw);
    for (int c = 0; c < C; ++c) {
      Eigen::Index off = (static_cast<Eigen::Index>(n) * C + c) * hw;
      VecMap(out.data() + off, hw).array() =
          ConstVecMap(xv.data() + off, hw).array() * m.array();
    }
  }
  const int x_id = x.id(), m_id = map.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& go = t.grad(out_id);
    const Tensor& xvv = t.value(x_id);
    const Tensor& mvv = t.value(m_id);
    Tensor& gx = t.grad_acc(x_id);
    Tensor& gm = t.grad_acc(m_id);
    for (int n = 0; n < N; ++n) {
      ConstVecMap m(mvv.data() + static_cast<Eigen::Index>(n) * hw, hw);
      VecMap gm_n(gm.data() + static_cast<Eigen::Index>(n) * hw, hw);
      for (int c = 0; c < C; ++c) {
        Eigen::Index off = (static_cast<Eigen::Index>(n) * C + c) * hw;
        ConstVecMap g(go.data() + off, hw);
        VecMap(gx.data() + off, hw).array() += g.array() * m.array();
        gm_n.array() += g.array() * ConstVecMap(xvv.data() + off, hw).array();
      }
    }
  });
}

Value instance_norm(const Value& x, const Value& gamma, const Value& beta, Scalar eps) {
  same_tape(x, gamma);
  Tape& tape = same_tape(x, beta);
  const Tensor& xv = x.tensor();
  require_rank4(xv, "instance_norm input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const Tensor& gv = gamma.tensor();
  const Tensor& bv = beta.tensor();
  if (gv.rank() != 1 || gv.dim(0) != C || bv.rank() != 1 || bv.dim(0) != C)
    throw std::invalid_argument("instance_norm: scale/shift must have shape [" +
                                std::to_string(C) + "]");
  const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;

  Tensor out(xv.shape());
  // Saved per-(sample,channel) statistics for the backward rule.
  Array mu(static_cast<Eigen::Index>(N) * C);
  Array istd(static_cast<Eigen::Index>(N) * C);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      Eigen::Index nc = static_cast<Eigen::Index>(n) * C + c;
      ConstVecMap v(xv.data() + nc * hw, hw);
      Scalar m = v.mean();
      Scalar var = (v.array() - m).square().mean();
      Scalar is = 1.0 / std::sqrt(var + eps);
      mu[nc] = m;
      istd[nc] = is;
      VecMap(out.data() + nc * hw, hw).array() = gv[c] * ((v.array() - m) * is) + bv[c];
    }
  }

  const int x_id = x.id(), g_id = gamma.id(), b_id = beta.id();
  const int out_id = tape.node_count();
  return tape.emit(std::move(out), [=, mu = std::move(mu), istd = std::move(istd)](Tape& t) {
    const Tensor& go = t.grad(out_id);
    const Tensor& xvv = t.value(x_id);
    const Tensor& gvv = t.value(g_id);
    Tensor& gx = t.grad_acc(x_id);
    Tensor& gg = t.grad_acc(g_id);
    Tensor& gb = t.grad_acc(b_id);
    const Scalar inv_m = 1.0 / static_cast<Scalar>(hw);
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        Eigen::Index nc = static_cast<Eigen::Index>(n) * C + c;
        ConstVecMap v(xvv.data() + nc * hw, hw);
        ConstVecMap g(go.data() + nc * hw, hw);
        Array xhat = (v.array() - mu[nc]) * istd[nc];
        Scalar gsum = g.sum();
        Scalar gx_sum = (g.array() * xhat).sum();
        gb[c] += gsum;
        gg[c] += gx_sum;
        VecMap(gx.data() + nc * hw, hw).array() +=
            gvv[c] * istd[nc] * (g.array() - gsum * inv_m - xhat * (gx_sum * inv_m));
      }
    }
  });
}

}  // namespace bseg
