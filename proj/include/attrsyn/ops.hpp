#pragma once

#include "attrsyn/autograd.hpp"

namespace attrsyn {

// Composites assembled from autograd primitives. Everything here inherits
// exact double differentiability from the primitive set.

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int stride, int pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  check(ws.size() == 4, "SHAPE_MISMATCH", "conv weight must be 4D");
  check(ws[1] == xs[1], "SHAPE_MISMATCH",
        "conv input channels " + std::to_string(xs[1]) + " vs weight " + std::to_string(ws[1]));
  ConvGeom geom = ConvGeom::of(xs, ws[2], ws[3], stride, pad);
  auto cols = im2col(x, geom);
  auto wm = reshape(w, {ws[0], ws[1] * ws[2] * ws[3]});
  auto prod = matmul(wm, cols);
  auto out = cols_to_batch(prod, geom.batch, ws[0], geom.oh, geom.ow);
  return add_channel_bias(out, bias);
}

template <typename S>
Var<S> linear(const Var<S>& x2d, const Var<S>& w, const Var<S>& bias) {
  // x (B,I) * w (O,I)^T + bias (O)
  auto out = matmul(x2d, w, false, true);
  int batch = out->value.dim(0), o = out->value.dim(1);
  auto out4 = reshape(out, {batch, o, 1, 1});
  return reshape(add_channel_bias(out4, bias), {batch, o});
}

template <typename S>
Var<S> spatial_mean(const Var<S>& x) {
  const auto& sh = x->value.shape();
  return scalar_mul(spatial_sum(x), S(1) / static_cast<S>(int64_t(sh[2]) * sh[3]));
}

template <typename S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     S eps = S(1e-5)) {
  const auto& sh = x->value.shape();
  auto mu = broadcast_spatial(spatial_mean(x), sh[2], sh[3]);
  auto xc = sub(x, mu);
  auto var = broadcast_spatial(spatial_mean(square_v(xc)), sh[2], sh[3]);
  auto xhat = mul(xc, rsqrt_v(scalar_add(var, eps)));
  auto scaled = mul(xhat, broadcast_cvec(gamma, sh[0], sh[2], sh[3]));
  return add(scaled, broadcast_cvec(beta, sh[0], sh[2], sh[3]));
}

// channel-axis log-softmax; max-shift goes through detach so gradients are exact
template <typename S>
Var<S> channel_log_softmax(const Var<S>& x) {
  const auto& sh = x->value.shape();
  Tensor<S> mx = Tensor<S>::zeros({sh[0], 1, sh[2], sh[3]});
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b)
    for (int64_t i = 0; i < hw; ++i) {
      S m = x->value[(static_cast<int64_t>(b) * sh[1]) * hw + i];
      for (int c = 1; c < sh[1]; ++c)
        m = std::max(m, x->value[(static_cast<int64_t>(b) * sh[1] + c) * hw + i]);
      mx[b * hw + i] = m;
    }
  auto z = sub(x, broadcast_channel(constant(std::move(mx)), sh[1]));
  auto lse = log_v(channel_sum_keep(exp_v(z)));
  return sub(z, broadcast_channel(lse, sh[1]));
}

template <typename S>
Var<S> channel_softmax(const Var<S>& x) {
  return exp_v(channel_log_softmax(x));
}

template <typename S>
Var<S> mean_abs(const Var<S>& a, const Var<S>& b) {
  return mean_all(abs_v(sub(a, b)));
}

}  // namespace attrsyn
