#pragma once

#include <sstream>

#include "attrsyn/domain.hpp"
#include "attrsyn/ops.hpp"
#include "attrsyn/rng.hpp"

namespace attrsyn {

// Objective components as pure graph functions. Conventions used throughout:
// src maps reduce by mean, elementwise losses reduce by mean over all
// elements, attribute BCE sums over attributes then averages over the batch.

template <typename S>
Tensor<S> attrs_to_tensor(const std::vector<AttributeVector>& ys) {
  check(!ys.empty(), "SHAPE_MISMATCH", "empty attribute batch");
  int n = static_cast<int>(ys[0].values.size());
  Tensor<S> t = Tensor<S>::zeros({static_cast<int>(ys.size()), n});
  for (size_t b = 0; b < ys.size(); ++b) {
    check(static_cast<int>(ys[b].values.size()) == n, "SHAPE_MISMATCH",
          "ragged attribute batch");
    for (int c = 0; c < n; ++c) t[b * n + c] = static_cast<S>(ys[b].values[c]);
  }
  return t;
}

template <typename S>
void check_finite(const Var<S>& v, const std::string& what) {
  check(v->value.all_finite(), "NONFINITE_LOSS", what + " is not finite");
}

// Interpolates real/fake per sample, differentiates the critic's summed src
// map at the interpolate, and penalizes the squared distance of the gradient
// norm from one. The returned node stays differentiable w.r.t. critic
// parameters (the training signal for the penalty).
template <typename S, typename Critic>
Var<S> gradient_penalty(Critic&& critic, const Tensor<S>& real, const Tensor<S>& fake,
                        uint64_t seed) {
  check(real.shape() == fake.shape(), "SHAPE_MISMATCH",
        "gradient_penalty: real " + real.shape_str() + " vs fake " + fake.shape_str());
  check(real.ndim() == 4, "SHAPE_MISMATCH", "gradient_penalty wants 4D batches");
  int batch = real.dim(0);
  int64_t chw = real.numel() / batch;
  Rng rng(mix_seed(seed, 0x9bull));
  Tensor<S> mix = Tensor<S>::zeros(real.shape());
  for (int b = 0; b < batch; ++b) {
    S eps = static_cast<S>(rng.uniform());
    for (int64_t i = 0; i < chw; ++i) {
      int64_t k = b * chw + i;
      mix[k] = eps * real[k] + (S(1) - eps) * fake[k];
    }
  }
  Var<S> xhat = leaf(std::move(mix));
  Var<S> out = critic(xhat);
  GradMap<S> grads = backward_pass(out);
  auto it = grads.find(xhat.get());
  Var<S> g = it != grads.end() ? it->second : constant(Tensor<S>::zeros(real.shape()));
  check(g->value.all_finite(), "NONFINITE_GRADIENT",
        "critic gradient at interpolates is not finite");
  auto norm = sqrt_v(scalar_add(sample_sum(square_v(g)), S(1e-16)));
  return mean_all(square_v(scalar_add(norm, S(-1))));
}

template <typename S>
Var<S> critic_loss(const Var<S>& d_real_src, const Var<S>& d_fake_src, const Var<S>& gp,
                   const LossWeights& w) {
  check(d_real_src->value.same_shape(d_fake_src->value), "SHAPE_MISMATCH",
        "critic src maps differ in shape");
  auto adv = sub(mean_all(d_fake_src), mean_all(d_real_src));
  return add(adv, scalar_mul(gp, static_cast<S>(w.lambda_gp)));
}

template <typename S>
Var<S> generator_adversarial_loss(const Var<S>& d_fake_src) {
  return neg(mean_all(d_fake_src));
}

// BCE from logits via softplus(x) - x*y; per-sample sum over attributes,
// mean over the batch. Shared by the real and fake classification losses.
template <typename S>
Var<S> attribute_bce(const Var<S>& cls_logits, const Tensor<S>& targets) {
  check(cls_logits->value.shape() == targets.shape(), "SHAPE_MISMATCH",
        "logits " + cls_logits->value.shape_str() + " vs targets " + targets.shape_str());
  check(cls_logits->value.ndim() == 2, "SHAPE_MISMATCH", "attribute logits must be (B,n_y)");
  int batch = cls_logits->value.dim(0), n = cls_logits->value.dim(1);
  auto elem = sub(softplus_v(cls_logits), mask_mul(cls_logits, targets));
  auto per_sample = sample_sum(reshape(elem, {batch, n, 1, 1}));
  return mean_all(per_sample);
}

template <typename S>
Var<S> cls_real(const Var<S>& cls_logits, const std::vector<AttributeVector>& y_prime) {
  return attribute_bce(cls_logits, attrs_to_tensor<S>(y_prime));
}

template <typename S>
Var<S> cls_fake(const Var<S>& cls_logits_on_fake, const std::vector<AttributeVector>& y_target) {
  return attribute_bce(cls_logits_on_fake, attrs_to_tensor<S>(y_target));
}

template <typename S>
Var<S> identity_loss(const Var<S>& x_translated, const Var<S>& x) {
  return mean_abs(x_translated, x);
}

// Cross-entropy of generated-image posteriors against hard labels taken from
// the real image's posteriors (argmax, no gradient through the labels).
template <typename S>
Var<S> parsing_loss(const Var<S>& p_real, const Var<S>& p_fake) {
  check(p_real->value.same_shape(p_fake->value), "SHAPE_MISMATCH",
        "parser posterior shapes differ");
  const auto& sh = p_real->value.shape();
  check(sh.size() == 4, "SHAPE_MISMATCH", "posteriors must be 4D");
  Tensor<S> onehot = Tensor<S>::zeros(sh);
  int64_t hw = static_cast<int64_t>(sh[2]) * sh[3];
  for (int b = 0; b < sh[0]; ++b)
    for (int64_t i = 0; i < hw; ++i) {
      int best = 0;
      S bv = p_real->value[(static_cast<int64_t>(b) * sh[1]) * hw + i];
      for (int c = 1; c < sh[1]; ++c) {
        S v = p_real->value[(static_cast<int64_t>(b) * sh[1] + c) * hw + i];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      onehot[(static_cast<int64_t>(b) * sh[1] + best) * hw + i] = S(1);
    }
  auto picked = mask_mul(log_v(scalar_add(p_fake, S(1e-12))), onehot);
  S scale = S(-1) / static_cast<S>(static_cast<int64_t>(sh[0]) * hw);
  return scalar_mul(sum_all(picked), scale);
}

template <typename S>
struct BidirectionalTerms {
  Var<S> image;
  Var<S> latent;
};

template <typename S>
BidirectionalTerms<S> bidirectional_loss(const Var<S>& x, const Var<S>& s, const Var<S>& x_hat,
                                         const Var<S>& s_hat, const Var<S>& z_forward,
                                         const Var<S>& z_fake) {
  BidirectionalTerms<S> out;
  out.image = mean_abs(x_hat, x);
  if (s && s_hat) out.image = add(out.image, mean_abs(s_hat, s));
  else
    check(!s && !s_hat, "SHAPE_MISMATCH", "side tensors must both be present or absent");
  out.latent = mean_abs(z_fake, z_forward);
  return out;
}

template <typename S>
Var<S> total_generator_loss(const Var<S>& adversarial, const Var<S>& bidirectional,
                            const Var<S>& cls_fake_term, const Var<S>& identity,
                            const Var<S>& parsing, const LossWeights& w) {
  auto t = add(adversarial, scalar_mul(bidirectional, static_cast<S>(w.lambda_bi)));
  t = add(t, scalar_mul(cls_fake_term, static_cast<S>(w.lambda_cls)));
  t = add(t, scalar_mul(identity, static_cast<S>(w.lambda_id)));
  return add(t, scalar_mul(parsing, static_cast<S>(w.lambda_p)));
}

template <typename S>
Var<S> total_discriminator_loss(const Var<S>& critic_part, const Var<S>& cls_real_term,
                                const LossWeights& w) {
  return add(critic_part, scalar_mul(cls_real_term, static_cast<S>(w.lambda_cls)));
}

// One row of the training log. total_g/total_d always equal the weighted
// combinations of the stored components; d_real_mean/d_fake_mean are raw src
// map means kept for diagnostics plots.
struct LossReport {
  double gan_critic = 0;  // critic adversarial part incl. weighted penalty
  double gan_generator = 0;
  double gradient_penalty = 0;
  double cls_real = 0;
  double cls_fake = 0;
  double identity = 0;
  double parsing = 0;
  double bidirectional_image = 0;
  double bidirectional_latent = 0;
  double total_g = 0;
  double total_d = 0;
  double d_real_mean = 0;
  double d_fake_mean = 0;
};

inline std::string loss_csv_header() {
  return "step,gan_critic,gan_generator,gradient_penalty,cls_real,cls_fake,identity,"
         "parsing,bidirectional_image,bidirectional_latent,total_g,total_d,"
         "d_real_mean,d_fake_mean";
}

inline std::string loss_csv_line(int64_t step, const LossReport& r) {
  std::ostringstream out;
  out.precision(9);
  out << step << "," << r.gan_critic << "," << r.gan_generator << "," << r.gradient_penalty
      << "," << r.cls_real << "," << r.cls_fake << "," << r.identity << "," << r.parsing << ","
      << r.bidirectional_image << "," << r.bidirectional_latent << "," << r.total_g << ","
      << r.total_d << "," << r.d_real_mean << "," << r.d_fake_mean;
  return out.str();
}

}  // namespace attrsyn
