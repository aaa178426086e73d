#pragma once

#include "attrsyn/checkpoint.hpp"
#include "attrsyn/nn.hpp"

namespace attrsyn {

// Adam with bias correction; one instance per parameter store. Moment slots
// are aligned with the store's creation order.
class Adam {
 public:
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void init(const ParamStore<float>& ps) {
    m_.clear();
    v_.clear();
    for (const auto& e : ps.entries()) {
      m_.push_back(Tensor<float>::zeros(e.var->value.shape()));
      v_.push_back(Tensor<float>::zeros(e.var->value.shape()));
    }
    t_ = 0;
  }

  void step(ParamStore<float>& ps, const GradMap<float>& grads, double lr) {
    check(m_.size() == ps.entries().size(), "INTERNAL", "optimizer not initialized");
    ++t_;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < ps.entries().size(); ++i) {
      Tensor<float>& p = ps.entries()[i].var->value;
      auto it = grads.find(ps.entries()[i].var.get());
      if (it == grads.end()) continue;  // parameter unused by this objective
      const Tensor<float>& g = it->second->value;
      check(g.same_shape(p), "SHAPE_MISMATCH",
            "gradient shape mismatch for " + ps.entries()[i].name);
      float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
      for (int64_t k = 0; k < p.numel(); ++k) {
        float gv = g[k];
        m_[i][k] = b1 * m_[i][k] + (1 - b1) * gv;
        v_[i][k] = b2 * v_[i][k] + (1 - b2) * gv * gv;
        double mhat = m_[i][k] / c1;
        double vhat = v_[i][k] / c2;
        p[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  int64_t steps_taken() const { return t_; }

  void append_state(NamedArrays& out, const ParamStore<float>& ps,
                    const std::string& prefix) const {
    check(m_.size() == ps.entries().size(), "INTERNAL", "optimizer not initialized");
    for (size_t i = 0; i < m_.size(); ++i) {
      out.emplace_back(prefix + "m." + ps.entries()[i].name, m_[i].clone());
      out.emplace_back(prefix + "v." + ps.entries()[i].name, v_[i].clone());
    }
  }

  void restore_state(const NamedArrays& arrays, const ParamStore<float>& ps,
                     const std::string& prefix, int64_t t) {
    init(ps);
    t_ = t;
    for (size_t i = 0; i < m_.size(); ++i) {
      const Tensor<float>& ms = find_array(arrays, prefix + "m." + ps.entries()[i].name);
      const Tensor<float>& vs = find_array(arrays, prefix + "v." + ps.entries()[i].name);
      check(ms.same_shape(m_[i]) && vs.same_shape(v_[i]), "SHAPE_MISMATCH",
            "optimizer state shape mismatch for " + ps.entries()[i].name);
      std::memcpy(m_[i].data(), ms.data(), sizeof(float) * ms.numel());
      std::memcpy(v_[i].data(), vs.data(), sizeof(float) * vs.numel());
    }
  }

 private:
  std::vector<Tensor<float>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace attrsyn
