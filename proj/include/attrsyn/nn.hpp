#pragma once

#include <string>

#include "attrsyn/ops.hpp"
#include "attrsyn/rng.hpp"

namespace attrsyn {

// Ordered, named parameter registry. Order is creation order and is the
// canonical iteration order for optimizers and checkpoints.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<S> var;
  };

  Var<S> add(const std::string& name, Tensor<S> init) {
    for (const auto& e : entries_)
      check(e.name != name, "INTERNAL", "duplicate parameter name " + name);
    Var<S> v = leaf(std::move(init));
    entries_.push_back({name, v});
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  Var<S> find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.var;
    fail("INTERNAL", "parameter not found: " + name);
  }

  int64_t count_scalars() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.var->value.numel();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.var->requires_grad = on;
  }

 private:
  std::vector<Entry> entries_;
};

template <typename S>
Tensor<S> gaussian_init(std::vector<int> shape, Rng& rng, S stddev = S(0.02)) {
  return Tensor<S>::gaussian(shape, rng, stddev);
}

template <typename S>
struct Conv2dLayer {
  Var<S> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<S>& ps, const std::string& prefix, int cin, int cout, int k,
              int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = ps.add(prefix + ".w", gaussian_init<S>({cout, cin, k, k}, rng));
    b = ps.add(prefix + ".b", Tensor<S>::zeros({cout}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename S>
struct InstanceNormLayer {
  Var<S> gamma, beta;

  InstanceNormLayer() = default;
  InstanceNormLayer(ParamStore<S>& ps, const std::string& prefix, int channels) {
    gamma = ps.add(prefix + ".g", Tensor<S>::full({channels}, S(1)));
    beta = ps.add(prefix + ".b", Tensor<S>::zeros({channels}));
  }

  Var<S> operator()(const Var<S>& x) const { return instance_norm(x, gamma, beta); }
};

template <typename S>
struct LinearLayer {
  Var<S> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<S>& ps, const std::string& prefix, int in, int out, Rng& rng) {
    w = ps.add(prefix + ".w", gaussian_init<S>({out, in}, rng));
    b = ps.add(prefix + ".b", Tensor<S>::zeros({out}));
  }

  Var<S> operator()(const Var<S>& x2d) const { return linear(x2d, w, b); }
};

// depthwise 3x3 then pointwise 1x1, ReLU after each
template <typename S>
struct SeparableBlock {
  Var<S> dw;
  Conv2dLayer<S> pw;

  SeparableBlock() = default;
  SeparableBlock(ParamStore<S>& ps, const std::string& prefix, int cin, int cout, Rng& rng) {
    dw = ps.add(prefix + ".dw", gaussian_init<S>({cin, 3, 3}, rng));
    pw = Conv2dLayer<S>(ps, prefix + ".pw", cin, cout, 1, 1, 0, rng);
  }

  Var<S> operator()(const Var<S>& x) const { return relu(pw(relu(depthwise3(x, dw)))); }
};

}  // namespace attrsyn
