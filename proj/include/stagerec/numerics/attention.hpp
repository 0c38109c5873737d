#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// One single-head self-attention layer: Q/K/V projections of size (d x d).
template <class Real>
struct AttentionWeights {
  Tensor<Real> wq, wk, wv;

  static AttentionWeights zeros(std::size_t d) {
    return {Tensor<Real>({d, d}), Tensor<Real>({d, d}), Tensor<Real>({d, d})};
  }

  static AttentionWeights random(std::size_t d, Rng& rng, Real scale) {
    AttentionWeights w = zeros(d);
    for (Tensor<Real>* t : {&w.wq, &w.wk, &w.wv}) {
      for (std::size_t i = 0; i < t->size(); ++i) {
        (*t)[i] = static_cast<Real>(rng.normal()) * scale;
      }
    }
    return w;
  }

  std::size_t dim() const { return wq.rank() == 2 ? wq.dim(0) : 0; }

  template <class F>
  void forEach(F&& f) {
    f("wq", wq); f("wk", wk); f("wv", wv);
  }
  template <class F>
  void forEach(F&& f) const {
    f("wq", wq); f("wk", wk); f("wv", wv);
  }
};

template <class Real>
struct AttentionResult {
  Tensor<Real> output;   // (n x d), includes the residual connection
  Tensor<Real> weights;  // (n x n) row-stochastic attention matrix
};

/// Scaled dot-product self-attention over a token matrix S (n x d) with a
/// residual connection: softmax(S Wq (S Wk)^T / sqrt(d)) (S Wv) + S.
template <class Real>
AttentionResult<Real> selfAttentionLayer(const Tensor<Real>& s, const AttentionWeights<Real>& w) {
  if (s.rank() != 2) throw std::invalid_argument("selfAttention: tokens must be (n x d)");
  const std::size_t n = s.dim(0), d = s.dim(1);
  if (n == 0) throw std::invalid_argument("selfAttention: empty token sequence");
  if (w.dim() != d) {
    throw std::invalid_argument("selfAttention: weight dim " + std::to_string(w.dim()) +
                                " vs token dim " + std::to_string(d));
  }
  checkFinite(s, "attention tokens");

  Tensor<Real> q({n, d}), k({n, d}), v({n, d});
  mmAcc(s.data(), w.wq.data(), q.data(), n, d, d);
  mmAcc(s.data(), w.wk.data(), k.data(), n, d, d);
  mmAcc(s.data(), w.wv.data(), v.data(), n, d, d);

  Tensor<Real> attn({n, n});
  mmNTAcc(q.data(), k.data(), attn.data(), n, d, n);
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(d));
  for (std::size_t i = 0; i < n; ++i) {
    Real* r = attn.row(i);
    Real mx = r[0] * inv_sqrt_d;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] *= inv_sqrt_d;
      mx = std::max(mx, r[j]);
    }
    Real sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (std::size_t j = 0; j < n; ++j) r[j] /= sum;
  }

  Tensor<Real> out = s;  // residual
  mmAcc(attn.data(), v.data(), out.data(), n, n, d);
  return {std::move(out), std::move(attn)};
}

/// Applies a stack of attention layers; with zero layers the input passes
/// through unchanged.
template <class Real>
Tensor<Real> selfAttentionStack(Tensor<Real> s, const std::vector<AttentionWeights<Real>>& layers) {
  for (const auto& w : layers) {
    s = selfAttentionLayer(s, w).output;
  }
  return s;
}

// -- tape variant -------------------------------------------------------------

template <class Real>
struct AttentionVars {
  using Var = typename Tape<Real>::Var;
  Var wq, wk, wv;
};

template <class Real>
AttentionVars<Real> liftAttention(Tape<Real>& tape, const AttentionWeights<Real>& w) {
  return {tape.leaf(w.wq), tape.leaf(w.wk), tape.leaf(w.wv)};
}

template <class Real>
typename Tape<Real>::Var attentionLayerOnTape(Tape<Real>& tape, typename Tape<Real>::Var s,
                                              const AttentionVars<Real>& w) {
  const std::size_t d = tape.value(s).dim(1);
  auto q = tape.matmul(s, w.wq);
  auto k = tape.matmul(s, w.wk);
  auto v = tape.matmul(s, w.wv);
  auto scores = tape.scale(tape.matmulNT(q, k), Real(1) / std::sqrt(static_cast<Real>(d)));
  auto attn = tape.softmaxRows(scores);
  return tape.add(tape.matmul(attn, v), s);
}

}  // namespace stagerec
