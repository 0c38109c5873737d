#pragma once

#include <stdexcept>

#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// Fused user representation: evolved + aggregated + global. Pass empty
/// tensors for branches an ablation removes or an empty history zeroes out.
template <class Real>
Tensor<Real> fuseVectors(const Tensor<Real>& a, const Tensor<Real>& b, const Tensor<Real>& c) {
  const Tensor<Real>* first = nullptr;
  for (const Tensor<Real>* t : {&a, &b, &c}) {
    if (t->empty()) continue;
    if (!first) {
      first = t;
    } else if (!t->sameShape(*first)) {
      throw std::invalid_argument("fuse: shape mismatch " + t->shapeString() + " vs " +
                                  first->shapeString());
    }
  }
  if (!first) throw std::invalid_argument("fuse: all inputs empty");
  Tensor<Real> out(first->shape());
  for (const Tensor<Real>* t : {&a, &b, &c}) {
    if (t->empty()) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*t)[i];
  }
  return out;
}

/// score = logistic(fused_user . fused_item)
template <class Real>
Real scoreDot(const Tensor<Real>& fused_user, const Tensor<Real>& fused_item) {
  if (!fused_user.sameShape(fused_item)) {
    throw std::invalid_argument("score: user " + fused_user.shapeString() + " vs item " +
                                fused_item.shapeString());
  }
  Real dot = 0;
  for (std::size_t i = 0; i < fused_user.size(); ++i) dot += fused_user[i] * fused_item[i];
  return logistic(dot);
}

/// Full fuse-and-score: user = evolved + aggregated + global, item = evolved
/// + global, probability = logistic of their dot product.
template <class Real>
Real fuseAndScore(const Tensor<Real>& user_evolved, const Tensor<Real>& user_aggregated,
                  const Tensor<Real>& user_global, const Tensor<Real>& item_evolved,
                  const Tensor<Real>& item_global) {
  const Tensor<Real> u = fuseVectors(user_evolved, user_aggregated, user_global);
  const Tensor<Real> empty;
  const Tensor<Real> i = fuseVectors(item_evolved, empty, item_global);
  return scoreDot(u, i);
}

}  // namespace stagerec
