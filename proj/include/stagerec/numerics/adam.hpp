#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagerec/core/tensor.hpp"

namespace stagerec {

template <class Real>
struct AdamConfig {
  Real learning_rate = Real(0.001);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  /// Coefficient of the squared-norm penalty; folded into the gradient as
  /// g + 2 * weight_decay * theta before the moment updates, so the penalty
  /// passes through Adam's rescaling like any other loss term.
  Real weight_decay = Real(0);

  void validate() const {
    if (learning_rate < Real(0)) throw std::invalid_argument("adam: negative learning rate");
    if (beta1 < Real(0) || beta1 >= Real(1)) throw std::invalid_argument("adam: beta1 out of [0,1)");
    if (beta2 < Real(0) || beta2 >= Real(1)) throw std::invalid_argument("adam: beta2 out of [0,1)");
    if (eps <= Real(0)) throw std::invalid_argument("adam: eps must be positive");
    if (weight_decay < Real(0)) throw std::invalid_argument("adam: negative weight decay");
  }
};

/// First/second moment slots for a fixed, ordered parameter list.
template <class Real>
struct AdamState {
  AdamConfig<Real> cfg;
  std::int64_t step = 0;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;

  static AdamState init(const std::vector<const Tensor<Real>*>& params, AdamConfig<Real> cfg) {
    cfg.validate();
    AdamState s;
    s.cfg = cfg;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto* p : params) {
      s.m.emplace_back(p->shape());
      s.v.emplace_back(p->shape());
    }
    return s;
  }
};

/// One Adam update with bias correction over an ordered parameter list.
/// `params` and `grads` must be index-aligned with the state slots.
template <class Real>
void adamStep(const std::vector<Tensor<Real>*>& params,
              const std::vector<const Tensor<Real>*>& grads, AdamState<Real>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam: params/grads/state slot count mismatch");
  }
  ++state.step;
  const Real b1 = state.cfg.beta1;
  const Real b2 = state.cfg.beta2;
  const Real bc1 = Real(1) - std::pow(b1, static_cast<Real>(state.step));
  const Real bc2 = Real(1) - std::pow(b2, static_cast<Real>(state.step));
  const Real lr = state.cfg.learning_rate;
  const Real eps = state.cfg.eps;
  const Real wd2 = Real(2) * state.cfg.weight_decay;

  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<Real>& p = *params[t];
    const Tensor<Real>& g = *grads[t];
    if (!p.sameShape(g) || !p.sameShape(state.m[t])) {
      throw std::invalid_argument("adam: shape mismatch in slot " + std::to_string(t) + ": param " +
                                  p.shapeString() + " vs grad " + g.shapeString());
    }
    Tensor<Real>& m = state.m[t];
    Tensor<Real>& v = state.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Real gi = g[i] + wd2 * p[i];
      m[i] = b1 * m[i] + (Real(1) - b1) * gi;
      v[i] = b2 * v[i] + (Real(1) - b2) * gi * gi;
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
#ifdef STAGEREC_CHECK_FINITE
    checkFinite(p, "adam updated param slot " + std::to_string(t));
#endif
  }
}

}  // namespace stagerec
