#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "admix/tensor.hpp"

namespace admix {

// Adam with the inverse-sqrt warmup schedule:
//   lr(t) = lr_base * sqrt(warmup) * min(t * warmup^-1.5, t^-0.5)
// which is linear in t up to warmup_steps, equals lr_base there, and decays
// as t^-0.5 afterwards. warmup_steps == 0 selects a constant lr_base.
template <class Real>
class AdamT {
 public:
  AdamT(double lr_base, int64_t warmup_steps, double beta1 = 0.9, double beta2 = 0.98,
        double eps = 1e-9)
      : lr_base_(lr_base),
        warmup_steps_(warmup_steps),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    if (!(lr_base > 0)) throw std::invalid_argument("adam: lr_base must be positive");
    if (warmup_steps < 0) throw std::invalid_argument("adam: warmup_steps must be >= 0");
  }

  int64_t step_count() const { return step_; }

  double lr(int64_t t) const {
    if (warmup_steps_ == 0) return lr_base_;
    const double w = static_cast<double>(warmup_steps_);
    const double td = static_cast<double>(t);
    return lr_base_ * std::sqrt(w) * std::min(td * std::pow(w, -1.5), 1.0 / std::sqrt(td));
  }

  // One update over all parameters; gradients are cleared afterwards.
  void step(std::vector<TensorT<Real>>& params) {
    ++step_;
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].data().size(), Real(0));
        v_[i].assign(params[i].data().size(), Real(0));
      }
    }
    if (m_.size() != params.size())
      throw std::runtime_error("adam: parameter set changed between steps");
    const double lr_t = lr(step_);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.has_grad())
        throw std::runtime_error("adam: parameter '" + (p.name().empty() ? "<unnamed>" : p.name()) +
                                 "' has no gradient; run backward() first");
      auto& val = p.data();
      auto& g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < val.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<Real>(mj);
        v[j] = static_cast<Real>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        val[j] = static_cast<Real>(static_cast<double>(val[j]) -
                                   lr_t * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

  // Global-norm gradient clipping; returns the pre-clip norm.
  static double clip_grad_norm(std::vector<TensorT<Real>>& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (const auto g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
      const double f = max_norm / norm;
      for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (auto& g : p.grad()) g = static_cast<Real>(static_cast<double>(g) * f);
      }
    }
    return norm;
  }

 private:
  double lr_base_;
  int64_t warmup_steps_;
  double beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

using Adam = AdamT<float>;

}  // namespace admix
