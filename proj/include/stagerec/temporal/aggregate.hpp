#pragma once

#include <stdexcept>
#include <vector>

#include "stagerec/numerics/attention.hpp"

namespace stagerec {

/// Long-range aggregation: L_a residual self-attention layers over the prefix
/// tokens, then a sum over positions of the final layer's rows. With zero
/// layers this degenerates to a plain sum of the input tokens.
template <class Real>
Tensor<Real> longRangeAggregate(const Tensor<Real>& tokens,
                                const std::vector<AttentionWeights<Real>>& layers) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0) {
    throw std::invalid_argument("long-range aggregate: empty prefix");
  }
  Tensor<Real> s = selfAttentionStack(tokens, layers);
  const std::size_t n = s.dim(0), d = s.dim(1);
  Tensor<Real> out({d});
  for (std::size_t i = 0; i < n; ++i) {
    const Real* r = s.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] += r[j];
  }
  return out;
}

}  // namespace stagerec
