#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// Default init scale 0.1/sqrt(d): keeps row norms near 0.1 regardless of d.
template <class Real>
Real embeddingScale(std::size_t d) {
  return Real(0.1) / static_cast<Real>(std::sqrt(static_cast<double>(d)));
}

/// Gaussian-initialized embedding table, N(0, scale^2).
template <class Real>
Tensor<Real> randomEmbeddings(std::size_t rows, std::size_t d, Rng& rng, Real scale) {
  Tensor<Real> t({rows, d});
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<Real>(rng.normal()) * scale;
  }
  return t;
}

template <class Real>
Tensor<Real> randomEmbeddings(std::size_t rows, std::size_t d, Rng& rng) {
  return randomEmbeddings(rows, d, rng, embeddingScale<Real>(d));
}

/// Linear projection of fixed item features into the embedding space:
/// E = F * W with F (I x f) and W (f x d). No bias, so a zero projection
/// yields zero embeddings.
template <class Real>
Tensor<Real> projectFeatures(const Tensor<Real>& features, const Tensor<Real>& projection) {
  if (features.rank() != 2 || projection.rank() != 2 || features.dim(1) != projection.dim(0)) {
    throw std::invalid_argument("feature projection: " + features.shapeString() + " * " +
                                projection.shapeString());
  }
  Tensor<Real> out({features.dim(0), projection.dim(1)});
  mmAcc(features.data(), projection.data(), out.data(), features.dim(0), features.dim(1),
        projection.dim(1));
  return out;
}

/// Init for the feature projection; variance shrinks with the feature count
/// so projected embeddings start on the same scale as random ones (assuming
/// O(1) feature entries).
template <class Real>
Tensor<Real> randomProjection(std::size_t feature_dim, std::size_t d, Rng& rng) {
  if (feature_dim == 0) throw std::invalid_argument("feature projection: zero feature dim");
  const Real s = embeddingScale<Real>(d) / static_cast<Real>(std::sqrt(static_cast<double>(feature_dim)));
  Tensor<Real> t({feature_dim, d});
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<Real>(rng.normal()) * s;
  }
  return t;
}

}  // namespace stagerec
