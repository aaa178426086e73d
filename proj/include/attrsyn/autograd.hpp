#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "attrsyn/tensor.hpp"

namespace attrsyn {

// Reverse-mode autodiff on a define-by-run graph. Every primitive's backward
// is itself expressed through graph ops, so a gradient produced by
// backward_pass stays differentiable and the gradient-penalty term can be
// trained through (gradient of a gradient norm).

template <typename S>
struct Node;

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
struct Node {
  Tensor<S> value;
  bool requires_grad = false;
  std::vector<Var<S>> parents;
  // Returns one grad per parent (empty Var where no grad flows). Receives
  // `self` so closures never capture their own node (would leak via the
  // shared_ptr cycle).
  std::function<std::vector<Var<S>>(const Var<S>& self, const Var<S>& grad)> back;
};

template <typename S>
Var<S> constant(Tensor<S> v) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  return n;
}

template <typename S>
Var<S> leaf(Tensor<S> v) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

template <typename S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<std::vector<Var<S>>(const Var<S>&, const Var<S>&)> back) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->back = std::move(back);
  return n;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check(a->value.same_shape(b->value), "SHAPE_MISMATCH",
        "add: " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() + b->value.arr();
  return make_op<S>(std::move(out), {a, b},
                    [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{g, g}; });
}

template <typename S>
Var<S> neg(const Var<S>& a);

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check(a->value.same_shape(b->value), "SHAPE_MISMATCH",
        "sub: " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() - b->value.arr();
  return make_op<S>(std::move(out), {a, b}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{g, neg(g)};
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check(a->value.same_shape(b->value), "SHAPE_MISMATCH",
        "mul: " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() * b->value.arr();
  return make_op<S>(std::move(out), {a, b}, [a, b](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, b), mul(g, a)};
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = -a->value.arr();
  return make_op<S>(std::move(out), {a},
                    [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{neg(g)}; });
}

template <typename S>
Var<S> scalar_mul(const Var<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() * c;
  return make_op<S>(std::move(out), {a}, [c](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{scalar_mul(g, c)};
  });
}

template <typename S>
Var<S> scalar_add(const Var<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() + c;
  return make_op<S>(std::move(out), {a},
                    [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{g}; });
}

// elementwise product with a non-differentiated mask tensor
template <typename S>
Var<S> mask_mul(const Var<S>& a, const Tensor<S>& mask) {
  check(a->value.same_shape(mask), "SHAPE_MISMATCH", "mask_mul shape");
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr() * mask.arr();
  return make_op<S>(std::move(out), {a}, [mask](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mask_mul(g, mask)};
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  Tensor<S> mask = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    bool pos = a->value[i] > S(0);
    mask[i] = pos ? S(1) : S(0);
    out[i] = pos ? a->value[i] : S(0);
  }
  return make_op<S>(std::move(out), {a}, [mask](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mask_mul(g, mask)};
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  Tensor<S> mask = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    bool pos = a->value[i] > S(0);
    mask[i] = pos ? S(1) : slope;
    out[i] = a->value[i] * mask[i];
  }
  return make_op<S>(std::move(out), {a}, [mask](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mask_mul(g, mask)};
  });
}

template <typename S>
Var<S> tanh_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) out[i] = std::tanh(a->value[i]);
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    // g * (1 - y^2)
    auto y2 = mul(self, self);
    return std::vector<Var<S>>{mul(g, scalar_add(neg(y2), S(1)))};
  });
}

template <typename S>
Var<S> sigmoid_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    S x = a->value[i];
    out[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  }
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    auto one_minus = scalar_add(neg(self), S(1));
    return std::vector<Var<S>>{mul(g, mul(self, one_minus))};
  });
}

// log(1 + e^x), saturation-safe
template <typename S>
Var<S> softplus_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    S x = a->value[i];
    out[i] = std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
  }
  return make_op<S>(std::move(out), {a}, [a](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, sigmoid_v(a))};
  });
}

template <typename S>
Var<S> exp_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().exp();
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, self)};
  });
}

template <typename S>
Var<S> recip_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().inverse();
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{neg(mul(g, mul(self, self)))};
  });
}

template <typename S>
Var<S> log_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().log();
  return make_op<S>(std::move(out), {a}, [a](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, recip_v(a))};
  });
}

template <typename S>
Var<S> sqrt_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().sqrt();
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{scalar_mul(mul(g, recip_v(self)), S(0.5))};
  });
}

template <typename S>
Var<S> square_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().square();
  return make_op<S>(std::move(out), {a}, [a](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{scalar_mul(mul(g, a), S(2))};
  });
}

template <typename S>
Var<S> rsqrt_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  out.arr() = a->value.arr().rsqrt();
  return make_op<S>(std::move(out), {a}, [](const Var<S>& self, const Var<S>& g) {
    auto y3 = mul(self, mul(self, self));
    return std::vector<Var<S>>{scalar_mul(mul(g, y3), S(-0.5))};
  });
}

template <typename S>
Var<S> abs_v(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a->value.shape());
  Tensor<S> sign = Tensor<S>::zeros(a->value.shape());
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    S x = a->value[i];
    sign[i] = x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0));
    out[i] = std::abs(x);
  }
  return make_op<S>(std::move(out), {a}, [sign](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mask_mul(g, sign)};
  });
}

template <typename S>
Var<S> detach(const Var<S>& a) {
  return constant(a->value);
}

// ---------------------------------------------------------------------------
// shape & layout
// ---------------------------------------------------------------------------

template <typename S>
Var<S> reshape(const Var<S>& a, std::vector<int> shape) {
  Tensor<S> out = a->value.reshaped(shape);
  std::vector<int> orig = a->value.shape();
  return make_op<S>(std::move(out), {a}, [orig](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{reshape(g, orig)};
  });
}

// A (ra,ca) x B (rb,cb), optional transposes
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
  check(a->value.ndim() == 2 && b->value.ndim() == 2, "SHAPE_MISMATCH", "matmul needs 2D");
  int ar = a->value.dim(0), ac = a->value.dim(1);
  int br = b->value.dim(0), bc = b->value.dim(1);
  int m = ta ? ac : ar, k = ta ? ar : ac;
  int k2 = tb ? bc : br, n = tb ? br : bc;
  check(k == k2, "SHAPE_MISMATCH", "matmul inner dims " + a->value.shape_str() + " vs " +
                                       b->value.shape_str());
  Tensor<S> out = Tensor<S>::zeros({m, n});
  auto A = a->value.mat(ar, ac);
  auto B = b->value.mat(br, bc);
  auto C = out.mat(m, n);
  if (!ta && !tb)
    C.noalias() = A * B;
  else if (!ta && tb)
    C.noalias() = A * B.transpose();
  else if (ta && !tb)
    C.noalias() = A.transpose() * B;
  else
    C.noalias() = A.transpose() * B.transpose();
  return make_op<S>(std::move(out), {a, b}, [a, b, ta, tb](const Var<S>&, const Var<S>& g) {
    Var<S> ga, gb;
    if (!ta && !tb) {
      ga = matmul(g, b, false, true);
      gb = matmul(a, g, true, false);
    } else if (!ta && tb) {
      ga = matmul(g, b, false, false);
      gb = matmul(g, a, true, false);
    } else if (ta && !tb) {
      ga = matmul(b, g, false, true);
      gb = matmul(a, g, false, false);
    } else {
      ga = matmul(b, g, true, true);
      gb = matmul(g, a, true, true);
    }
    return std::vector<Var<S>>{ga, gb};
  });
}

struct ConvGeom {
  int batch, cin, h, w;   // input
  int kh, kw, stride, pad;
  int oh, ow;

  static ConvGeom of(const std::vector<int>& in_shape, int kh, int kw, int stride, int pad) {
    ConvGeom g;
    g.batch = in_shape[0];
    g.cin = in_shape[1];
    g.h = in_shape[2];
    g.w = in_shape[3];
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;
    g.oh = (g.h + 2 * pad - kh) / stride + 1;
    g.ow = (g.w + 2 * pad - kw) / stride + 1;
    check(g.oh > 0 && g.ow > 0, "SHAPE_MISMATCH", "conv output would be empty");
    return g;
  }
};

template <typename S>
Tensor<S> im2col_value(const Tensor<S>& x, const ConvGeom& g) {
  Tensor<S> cols = Tensor<S>::zeros({g.cin * g.kh * g.kw, g.batch * g.oh * g.ow});
  const int ncols = g.batch * g.oh * g.ow;
  for (int c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        S* row = cols.data() + static_cast<int64_t>((c * g.kh + ki) * g.kw + kj) * ncols;
        for (int b = 0; b < g.batch; ++b) {
          const S* src = x.data() + (static_cast<int64_t>(b) * g.cin + c) * g.h * g.w;
          for (int oh = 0; oh < g.oh; ++oh) {
            int ih = oh * g.stride - g.pad + ki;
            S* dst = row + (static_cast<int64_t>(b) * g.oh + oh) * g.ow;
            if (ih < 0 || ih >= g.h) continue;  // stays zero
            for (int ow = 0; ow < g.ow; ++ow) {
              int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) dst[ow] = src[static_cast<int64_t>(ih) * g.w + iw];
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename S>
Tensor<S> col2im_value(const Tensor<S>& cols, const ConvGeom& g) {
  Tensor<S> x = Tensor<S>::zeros({g.batch, g.cin, g.h, g.w});
  const int ncols = g.batch * g.oh * g.ow;
  for (int c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const S* row = cols.data() + static_cast<int64_t>((c * g.kh + ki) * g.kw + kj) * ncols;
        for (int b = 0; b < g.batch; ++b) {
          S* dst = x.data() + (static_cast<int64_t>(b) * g.cin + c) * g.h * g.w;
          for (int oh = 0; oh < g.oh; ++oh) {
            int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            const S* src = row + (static_cast<int64_t>(b) * g.oh + oh) * g.ow;
            for (int ow = 0; ow < g.ow; ++ow) {
              int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) dst[static_cast<int64_t>(ih) * g.w + iw] += src[ow];
            }
          }
        }
      }
    }
  }
  return x;
}

template <typename S>
Var<S> col2im(const Var<S>& cols, ConvGeom geom);

template <typename S>
Var<S> im2col(const Var<S>& x, ConvGeom geom) {
  return make_op<S>(im2col_value(x->value, geom), {x}, [geom](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{col2im(g, geom)};
  });
}

template <typename S>
Var<S> col2im(const Var<S>& cols, ConvGeom geom) {
  return make_op<S>(col2im_value(cols->value, geom), {cols},
                    [geom](const Var<S>&, const Var<S>& g) {
                      return std::vector<Var<S>>{im2col(g, geom)};
                    });
}

// (C, B*OH*OW) -> (B, C, OH, OW)
template <typename S>
Var<S> batch_to_cols(const Var<S>& x);

template <typename S>
Var<S> cols_to_batch(const Var<S>& a, int batch, int channels, int oh, int ow) {
  check(a->value.ndim() == 2 && a->value.dim(0) == channels &&
            a->value.dim(1) == batch * oh * ow,
        "SHAPE_MISMATCH", "cols_to_batch input " + a->value.shape_str());
  Tensor<S> out = Tensor<S>::zeros({batch, channels, oh, ow});
  const int64_t hw = static_cast<int64_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const S* src = a->value.data() + static_cast<int64_t>(c) * batch * hw;
    for (int b = 0; b < batch; ++b)
      std::memcpy(out.data() + (static_cast<int64_t>(b) * channels + c) * hw, src + b * hw,
                  sizeof(S) * hw);
  }
  return make_op<S>(std::move(out), {a}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{batch_to_cols(g)};
  });
}

// (B, C, OH, OW) -> (C, B*OH*OW)
template <typename S>
Var<S> batch_to_cols(const Var<S>& x) {
  const auto& sh = x->value.shape();
  int batch = sh[0], channels = sh[1], oh = sh[2], ow = sh[3];
  Tensor<S> out = Tensor<S>::zeros({channels, batch * oh * ow});
  const int64_t hw = static_cast<int64_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    S* dst = out.data() + static_cast<int64_t>(c) * batch * hw;
    for (int b = 0; b < batch; ++b)
      std::memcpy(dst + b * hw, x->value.data() + (static_cast<int64_t>(b) * channels + c) * hw,
                  sizeof(S) * hw);
  }
  return make_op<S>(std::move(out), {x},
                    [batch, channels, oh, ow](const Var<S>&, const Var<S>& g) {
                      return std::vector<Var<S>>{cols_to_batch(g, batch, channels, oh, ow)};
                    });
}

// ---------------------------------------------------------------------------
// broadcasts & reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> broadcast_cvec(const Var<S>& v, int batch, int h, int w);

// (B,C,H,W) + bias(C)
template <typename S>
Var<S> channel_sum_bhw(const Var<S>& x) {
  const auto& sh = x->value.shape();
  int batch = sh[0], channels = sh[1];
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  Tensor<S> out = Tensor<S>::zeros({channels});
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const S* p = x->value.data() + (static_cast<int64_t>(b) * channels + c) * hw;
      S acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += p[i];
      out[c] += acc;
    }
  int hh = sh[2], ww = sh[3];
  return make_op<S>(std::move(out), {x}, [batch, hh, ww](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_cvec(g, batch, hh, ww)};
  });
}

template <typename S>
Var<S> broadcast_cvec(const Var<S>& v, int batch, int h, int w) {
  int channels = v->value.dim(0);
  Tensor<S> out = Tensor<S>::zeros({batch, channels, h, w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      S* p = out.data() + (static_cast<int64_t>(b) * channels + c) * hw;
      for (int64_t i = 0; i < hw; ++i) p[i] = v->value[c];
    }
  return make_op<S>(std::move(out), {v}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{channel_sum_bhw(g)};
  });
}

template <typename S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& bias) {
  const auto& sh = x->value.shape();
  check(bias->value.ndim() == 1 && bias->value.dim(0) == sh[1], "SHAPE_MISMATCH",
        "bias length vs channels");
  Tensor<S> out = Tensor<S>::zeros(sh);
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < sh[1]; ++c) {
      const S* p = x->value.data() + (static_cast<int64_t>(b) * sh[1] + c) * hw;
      S* q = out.data() + (static_cast<int64_t>(b) * sh[1] + c) * hw;
      S bv = bias->value[c];
      for (int64_t i = 0; i < hw; ++i) q[i] = p[i] + bv;
    }
  return make_op<S>(std::move(out), {x, bias}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{g, channel_sum_bhw(g)};
  });
}

template <typename S>
Var<S> broadcast_spatial(const Var<S>& x, int h, int w);

// (B,C,H,W) -> (B,C,1,1)
template <typename S>
Var<S> spatial_sum(const Var<S>& x) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[0], sh[1], 1, 1});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int64_t bc = 0; bc < static_cast<int64_t>(sh[0]) * sh[1]; ++bc) {
    const S* p = x->value.data() + bc * hw;
    S acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += p[i];
    out[bc] = acc;
  }
  int hh = sh[2], ww = sh[3];
  return make_op<S>(std::move(out), {x}, [hh, ww](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_spatial(g, hh, ww)};
  });
}

template <typename S>
Var<S> broadcast_spatial(const Var<S>& x, int h, int w) {
  const auto& sh = x->value.shape();
  check(sh[2] == 1 && sh[3] == 1, "SHAPE_MISMATCH", "broadcast_spatial wants (B,C,1,1)");
  Tensor<S> out = Tensor<S>::zeros({sh[0], sh[1], h, w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t bc = 0; bc < static_cast<int64_t>(sh[0]) * sh[1]; ++bc) {
    S v = x->value[bc];
    S* p = out.data() + bc * hw;
    for (int64_t i = 0; i < hw; ++i) p[i] = v;
  }
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{spatial_sum(g)};
  });
}

template <typename S>
Var<S> broadcast_sample(const Var<S>& x, int channels, int h, int w);

// (B,C,H,W) -> (B,1,1,1)
template <typename S>
Var<S> sample_sum(const Var<S>& x) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[0], 1, 1, 1});
  int64_t chw = static_cast<int64_t>(sh[1]) * sh[2] * sh[3];
  for (int b = 0; b < sh[0]; ++b) {
    const S* p = x->value.data() + b * chw;
    S acc = 0;
    for (int64_t i = 0; i < chw; ++i) acc += p[i];
    out[b] = acc;
  }
  int c = sh[1], hh = sh[2], ww = sh[3];
  return make_op<S>(std::move(out), {x}, [c, hh, ww](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_sample(g, c, hh, ww)};
  });
}

template <typename S>
Var<S> broadcast_sample(const Var<S>& x, int channels, int h, int w) {
  const auto& sh = x->value.shape();
  check(sh[1] == 1 && sh[2] == 1 && sh[3] == 1, "SHAPE_MISMATCH",
        "broadcast_sample wants (B,1,1,1)");
  Tensor<S> out = Tensor<S>::zeros({sh[0], channels, h, w});
  int64_t chw = static_cast<int64_t>(channels) * h * w;
  for (int b = 0; b < sh[0]; ++b) {
    S v = x->value[b];
    S* p = out.data() + b * chw;
    for (int64_t i = 0; i < chw; ++i) p[i] = v;
  }
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{sample_sum(g)};
  });
}

template <typename S>
Var<S> broadcast_channel(const Var<S>& x, int channels);

// (B,C,H,W) -> (B,1,H,W)
template <typename S>
Var<S> channel_sum_keep(const Var<S>& x) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[0], 1, sh[2], sh[3]});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b) {
    S* q = out.data() + b * hw;
    for (int c = 0; c < sh[1]; ++c) {
      const S* p = x->value.data() + (static_cast<int64_t>(b) * sh[1] + c) * hw;
      for (int64_t i = 0; i < hw; ++i) q[i] += p[i];
    }
  }
  int channels = sh[1];
  return make_op<S>(std::move(out), {x}, [channels](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_channel(g, channels)};
  });
}

template <typename S>
Var<S> broadcast_channel(const Var<S>& x, int channels) {
  const auto& sh = x->value.shape();
  check(sh[1] == 1, "SHAPE_MISMATCH", "broadcast_channel wants (B,1,H,W)");
  Tensor<S> out = Tensor<S>::zeros({sh[0], channels, sh[2], sh[3]});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b) {
    const S* p = x->value.data() + b * hw;
    for (int c = 0; c < channels; ++c)
      std::memcpy(out.data() + (static_cast<int64_t>(b) * channels + c) * hw, p, sizeof(S) * hw);
  }
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{channel_sum_keep(g)};
  });
}

template <typename S>
Var<S> broadcast_full(const Var<S>& x, std::vector<int> shape);

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  S acc = 0;
  for (int64_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
  std::vector<int> orig = x->value.shape();
  return make_op<S>(Tensor<S>::full({1}, acc), {x}, [orig](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_full(g, orig)};
  });
}

template <typename S>
Var<S> broadcast_full(const Var<S>& x, std::vector<int> shape) {
  check(x->value.numel() == 1, "SHAPE_MISMATCH", "broadcast_full wants a scalar");
  Tensor<S> out = Tensor<S>::full(shape, x->value[0]);
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{sum_all(g)};
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& x) {
  return scalar_mul(sum_all(x), S(1) / static_cast<S>(x->value.numel()));
}

// ---------------------------------------------------------------------------
// channel concat / slice, pixel shuffle, resampling
// ---------------------------------------------------------------------------

template <typename S>
Var<S> slice_channels(const Var<S>& x, int c0, int c1);

template <typename S>
Var<S> embed_channels(const Var<S>& x, int c0, int ctotal);

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  check(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3], "SHAPE_MISMATCH",
        "concat_channels: " + a->value.shape_str() + " vs " + b->value.shape_str());
  int ca = sa[1], cb = sb[1];
  Tensor<S> out = Tensor<S>::zeros({sa[0], ca + cb, sa[2], sa[3]});
  int64_t hw = static_cast<int64_t>(sa[2]) * sa[3];
  for (int bi = 0; bi < sa[0]; ++bi) {
    std::memcpy(out.data() + static_cast<int64_t>(bi) * (ca + cb) * hw,
                a->value.data() + static_cast<int64_t>(bi) * ca * hw, sizeof(S) * ca * hw);
    std::memcpy(out.data() + (static_cast<int64_t>(bi) * (ca + cb) + ca) * hw,
                b->value.data() + static_cast<int64_t>(bi) * cb * hw, sizeof(S) * cb * hw);
  }
  return make_op<S>(std::move(out), {a, b}, [ca, cb](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{slice_channels(g, 0, ca), slice_channels(g, ca, ca + cb)};
  });
}

template <typename S>
Var<S> slice_channels(const Var<S>& x, int c0, int c1) {
  const auto& sh = x->value.shape();
  check(0 <= c0 && c0 < c1 && c1 <= sh[1], "SHAPE_MISMATCH", "slice_channels range");
  int nc = c1 - c0;
  Tensor<S> out = Tensor<S>::zeros({sh[0], nc, sh[2], sh[3]});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b)
    std::memcpy(out.data() + static_cast<int64_t>(b) * nc * hw,
                x->value.data() + (static_cast<int64_t>(b) * sh[1] + c0) * hw,
                sizeof(S) * nc * hw);
  int ctot = sh[1];
  return make_op<S>(std::move(out), {x}, [c0, ctot](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{embed_channels(g, c0, ctot)};
  });
}

// place x's channels at [c0, c0+C) inside zeros of ctotal channels
template <typename S>
Var<S> embed_channels(const Var<S>& x, int c0, int ctotal) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[0], ctotal, sh[2], sh[3]});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b)
    std::memcpy(out.data() + (static_cast<int64_t>(b) * ctotal + c0) * hw,
                x->value.data() + static_cast<int64_t>(b) * sh[1] * hw,
                sizeof(S) * sh[1] * hw);
  int nc = sh[1];
  return make_op<S>(std::move(out), {x}, [c0, nc](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{slice_channels(g, c0, c0 + nc)};
  });
}

template <typename S>
Var<S> pixel_unshuffle(const Var<S>& x, int r);

// (B, C*r^2, H, W) -> (B, C, H*r, W*r)
template <typename S>
Var<S> pixel_shuffle(const Var<S>& x, int r) {
  const auto& sh = x->value.shape();
  check(sh[1] % (r * r) == 0, "SHAPE_MISMATCH", "pixel_shuffle channels not divisible by r^2");
  int oc = sh[1] / (r * r), h = sh[2], w = sh[3];
  Tensor<S> out = Tensor<S>::zeros({sh[0], oc, h * r, w * r});
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < oc; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          int ic = c * r * r + dy * r + dx;
          for (int i = 0; i < h; ++i) {
            const S* src = x->value.data() + x->value.idx4(b, ic, i, 0);
            S* dst = out.data() + out.idx4(b, c, i * r + dy, dx);
            for (int j = 0; j < w; ++j) dst[static_cast<int64_t>(j) * r] = src[j];
          }
        }
  return make_op<S>(std::move(out), {x}, [r](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{pixel_unshuffle(g, r)};
  });
}

template <typename S>
Var<S> pixel_unshuffle(const Var<S>& x, int r) {
  const auto& sh = x->value.shape();
  check(sh[2] % r == 0 && sh[3] % r == 0, "SHAPE_MISMATCH", "pixel_unshuffle spatial dims");
  int c = sh[1], oh = sh[2] / r, ow = sh[3] / r;
  Tensor<S> out = Tensor<S>::zeros({sh[0], c * r * r, oh, ow});
  for (int b = 0; b < sh[0]; ++b)
    for (int ci = 0; ci < c; ++ci)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          int occ = ci * r * r + dy * r + dx;
          for (int i = 0; i < oh; ++i) {
            const S* src = x->value.data() + x->value.idx4(b, ci, i * r + dy, dx);
            S* dst = out.data() + out.idx4(b, occ, i, 0);
            for (int j = 0; j < ow; ++j) dst[j] = src[static_cast<int64_t>(j) * r];
          }
        }
  return make_op<S>(std::move(out), {x}, [r](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{pixel_shuffle(g, r)};
  });
}

template <typename S>
Var<S> pool_sum2(const Var<S>& x);

template <typename S>
Var<S> upsample_nearest2(const Var<S>& x) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[0], sh[1], sh[2] * 2, sh[3] * 2});
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < sh[1]; ++c)
      for (int i = 0; i < sh[2]; ++i) {
        const S* src = x->value.data() + x->value.idx4(b, c, i, 0);
        S* d0 = out.data() + out.idx4(b, c, 2 * i, 0);
        S* d1 = out.data() + out.idx4(b, c, 2 * i + 1, 0);
        for (int j = 0; j < sh[3]; ++j) {
          d0[2 * j] = d0[2 * j + 1] = src[j];
          d1[2 * j] = d1[2 * j + 1] = src[j];
        }
      }
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{pool_sum2(g)};
  });
}

template <typename S>
Var<S> pool_sum2(const Var<S>& x) {
  const auto& sh = x->value.shape();
  check(sh[2] % 2 == 0 && sh[3] % 2 == 0, "SHAPE_MISMATCH", "pool_sum2 odd spatial dims");
  Tensor<S> out = Tensor<S>::zeros({sh[0], sh[1], sh[2] / 2, sh[3] / 2});
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < sh[1]; ++c)
      for (int i = 0; i < sh[2] / 2; ++i) {
        const S* s0 = x->value.data() + x->value.idx4(b, c, 2 * i, 0);
        const S* s1 = x->value.data() + x->value.idx4(b, c, 2 * i + 1, 0);
        S* dst = out.data() + out.idx4(b, c, i, 0);
        for (int j = 0; j < sh[3] / 2; ++j)
          dst[j] = s0[2 * j] + s0[2 * j + 1] + s1[2 * j] + s1[2 * j + 1];
      }
  return make_op<S>(std::move(out), {x}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{upsample_nearest2(g)};
  });
}

template <typename S>
Var<S> avg_pool2(const Var<S>& x) {
  return scalar_mul(pool_sum2(x), S(0.25));
}

// ---------------------------------------------------------------------------
// depthwise 3x3 (stride 1, pad 1); backward w.r.t. weights is its own op
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> depthwise3_value(const Tensor<S>& x, const Tensor<S>& w) {
  const auto& sh = x.shape();
  Tensor<S> out = Tensor<S>::zeros(sh);
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < sh[1]; ++c) {
      const S* k = w.data() + static_cast<int64_t>(c) * 9;
      for (int i = 0; i < sh[2]; ++i)
        for (int j = 0; j < sh[3]; ++j) {
          S acc = 0;
          for (int ki = 0; ki < 3; ++ki) {
            int ih = i + ki - 1;
            if (ih < 0 || ih >= sh[2]) continue;
            for (int kj = 0; kj < 3; ++kj) {
              int iw = j + kj - 1;
              if (iw < 0 || iw >= sh[3]) continue;
              acc += k[ki * 3 + kj] * x.at4(b, c, ih, iw);
            }
          }
          out.at4(b, c, i, j) = acc;
        }
    }
  return out;
}

template <typename S>
Var<S> flip_hw(const Var<S>& w) {
  // (C,3,3) -> 180-degree rotation per channel
  Tensor<S> out = Tensor<S>::zeros(w->value.shape());
  int c = w->value.dim(0);
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        out[static_cast<int64_t>(ci) * 9 + i * 3 + j] =
            w->value[static_cast<int64_t>(ci) * 9 + (2 - i) * 3 + (2 - j)];
  return make_op<S>(std::move(out), {w}, [](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{flip_hw(g)};
  });
}

template <typename S>
Var<S> depthwise_wgrad(const Var<S>& x, const Var<S>& g);

template <typename S>
Var<S> depthwise3(const Var<S>& x, const Var<S>& w) {
  check(w->value.ndim() == 3 && w->value.dim(0) == x->value.dim(1) && w->value.dim(1) == 3 &&
            w->value.dim(2) == 3,
        "SHAPE_MISMATCH", "depthwise3 weight must be (C,3,3)");
  return make_op<S>(depthwise3_value(x->value, w->value), {x, w},
                    [x, w](const Var<S>&, const Var<S>& g) {
                      return std::vector<Var<S>>{depthwise3(g, flip_hw(w)),
                                                 depthwise_wgrad(x, g)};
                    });
}

// dw[c,i,j] = sum_{b,h,w} x[b,c,h+i-1,w+j-1] * g[b,c,h,w]
template <typename S>
Var<S> depthwise_wgrad(const Var<S>& x, const Var<S>& g) {
  const auto& sh = x->value.shape();
  Tensor<S> out = Tensor<S>::zeros({sh[1], 3, 3});
  for (int b = 0; b < sh[0]; ++b)
    for (int c = 0; c < sh[1]; ++c)
      for (int ki = 0; ki < 3; ++ki)
        for (int kj = 0; kj < 3; ++kj) {
          S acc = 0;
          for (int i = 0; i < sh[2]; ++i) {
            int ih = i + ki - 1;
            if (ih < 0 || ih >= sh[2]) continue;
            for (int j = 0; j < sh[3]; ++j) {
              int iw = j + kj - 1;
              if (iw < 0 || iw >= sh[3]) continue;
              acc += x->value.at4(b, c, ih, iw) * g->value.at4(b, c, i, j);
            }
          }
          out[static_cast<int64_t>(c) * 9 + ki * 3 + kj] += acc;
        }
  return make_op<S>(std::move(out), {x, g}, [x, g](const Var<S>&, const Var<S>& u) {
    return std::vector<Var<S>>{depthwise3(g, flip_hw(u)), depthwise3(x, u)};
  });
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

template <typename S>
using GradMap = std::unordered_map<const Node<S>*, Var<S>>;

// Accumulates d(root)/d(node) for every requires_grad node reachable from
// root. seed defaults to ones (so a non-scalar root is differentiated as if
// summed). Grads are returned as graph nodes and stay differentiable.
template <typename S>
GradMap<S> backward_pass(const Var<S>& root, const Tensor<S>* seed = nullptr) {
  GradMap<S> grads;
  if (!root->requires_grad) return grads;

  // iterative post-order topological sort over requires_grad subgraph
  std::vector<Var<S>> order;
  std::unordered_set<const Node<S>*> visited;
  std::vector<std::pair<Var<S>, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Var<S> p = node->parents[idx++];
      if (p && p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grads[root.get()] =
      constant(seed ? seed->clone() : Tensor<S>::full(root->value.shape(), S(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Var<S>& node = *it;
    auto g_it = grads.find(node.get());
    if (g_it == grads.end() || !node->back) continue;
    std::vector<Var<S>> pgrads = node->back(node, g_it->second);
    check(pgrads.size() == node->parents.size(), "INTERNAL",
          "backward returned wrong grad count");
    for (size_t i = 0; i < pgrads.size(); ++i) {
      const Var<S>& p = node->parents[i];
      if (!p || !p->requires_grad || !pgrads[i]) continue;
      auto acc = grads.find(p.get());
      if (acc == grads.end())
        grads[p.get()] = pgrads[i];
      else
        acc->second = add(acc->second, pgrads[i]);
    }
  }
  return grads;
}

template <typename S>
Var<S> grad_of(const GradMap<S>& grads, const Var<S>& v) {
  auto it = grads.find(v.get());
  check(it != grads.end(), "INTERNAL", "no gradient recorded for requested node");
  return it->second;
}

}  // namespace attrsyn
