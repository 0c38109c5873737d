#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "stagerec/core/tensor.hpp"

namespace stagerec {

/// Predictions are clamped to [kBceEps, 1 - kBceEps] inside the BCE loss.
inline constexpr double kBceEps = 1e-7;

template <class Real>
struct LossWeights {
  Real lambda_t = Real(0.1);
  Real lambda_cl = Real(0.01);
  Real lambda_sl = Real(0.01);
  Real beta = Real(0);
  Real tau = Real(0.1);

  void validate() const {
    if (lambda_t < Real(0) || lambda_cl < Real(0) || lambda_sl < Real(0) || beta < Real(0)) {
      throw std::invalid_argument("loss weights: lambdas and beta must be >= 0");
    }
    if (!(tau > Real(0))) throw std::invalid_argument("loss weights: tau must be > 0");
  }
};

/// Mean binary cross-entropy over one stage's prediction set. An empty set
/// contributes 0 (the caller counts the warning).
template <class Real>
Real bceLoss(const std::vector<Real>& predictions, const std::vector<Real>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("bce: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) return Real(0);
  const Real eps = static_cast<Real>(kBceEps);
  Real acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Real p = std::min(std::max(predictions[i], eps), Real(1) - eps);
    acc += -(labels[i] * std::log(p) + (Real(1) - labels[i]) * std::log(Real(1) - p));
  }
  return acc / static_cast<Real>(predictions.size());
}

/// InfoNCE consistency between each user's evolved embedding (per stage) and
/// their global embedding, with the other batch users' global rows as
/// negatives. Summed over stages, averaged over the batch.
template <class Real>
Real consistencyLoss(const std::vector<Tensor<Real>>& evolved_per_stage,
                     const Tensor<Real>& global_rows, Real tau) {
  if (!(tau > Real(0))) throw std::invalid_argument("consistency: tau must be > 0");
  if (global_rows.rank() != 2 || global_rows.dim(0) == 0) {
    throw std::invalid_argument("consistency: need a non-empty (B x d) global table");
  }
  const std::size_t b = global_rows.dim(0), d = global_rows.dim(1);
  Real total = 0;
  for (const auto& evolved : evolved_per_stage) {
    if (!evolved.sameShape(global_rows)) {
      throw std::invalid_argument("consistency: evolved " + evolved.shapeString() +
                                  " vs global " + global_rows.shapeString());
    }
    for (std::size_t u = 0; u < b; ++u) {
      // logits over the batch, max-subtracted for stable exponentiation
      std::vector<Real> logits(b);
      Real mx = std::numeric_limits<Real>::lowest();
      for (std::size_t j = 0; j < b; ++j) {
        Real dot = 0;
        for (std::size_t k = 0; k < d; ++k) dot += evolved.at(u, k) * global_rows.at(j, k);
        logits[j] = dot / tau;
        mx = std::max(mx, logits[j]);
      }
      Real sum = 0;
      for (std::size_t j = 0; j < b; ++j) sum += std::exp(logits[j] - mx);
      total += mx + std::log(sum) - logits[u];
    }
  }
  return total / static_cast<Real>(b);
}

/// First-order smoothness: sum over stages t >= 2 of ||e^t - e^{t-1}||^2,
/// averaged over users (rows). A single stage has no adjacent pair -> 0.
template <class Real>
Real smoothnessLoss(const std::vector<Tensor<Real>>& evolved_per_stage) {
  if (evolved_per_stage.empty()) {
    throw std::invalid_argument("smoothness: need at least one stage");
  }
  if (evolved_per_stage.size() == 1) return Real(0);
  const std::size_t n = evolved_per_stage.front().dim(0);
  Real total = 0;
  for (std::size_t t = 1; t < evolved_per_stage.size(); ++t) {
    const auto& cur = evolved_per_stage[t];
    const auto& prev = evolved_per_stage[t - 1];
    if (!cur.sameShape(prev)) {
      throw std::invalid_argument("smoothness: stage tables disagree on shape");
    }
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const Real diff = cur[i] - prev[i];
      total += diff * diff;
    }
  }
  return total / static_cast<Real>(n);
}

template <class Real>
struct LossBreakdown {
  std::vector<Real> per_stage_bce;
  Real consistency = 0;
  Real smoothness = 0;
  Real l2 = 0;  // unweighted ||theta||^2
  Real total = 0;
};

/// total = lambda_t * sum_t L_t + lambda_cl * L_cl + lambda_sl * L_sl + beta * ||theta||^2
template <class Real>
LossBreakdown<Real> totalLoss(std::vector<Real> per_stage_bce, Real consistency, Real smoothness,
                              Real params_squared_norm, const LossWeights<Real>& w) {
  w.validate();
  LossBreakdown<Real> out;
  out.per_stage_bce = std::move(per_stage_bce);
  out.consistency = consistency;
  out.smoothness = smoothness;
  out.l2 = params_squared_norm;
  Real bce_sum = 0;
  for (Real l : out.per_stage_bce) bce_sum += l;
  out.total = w.lambda_t * bce_sum + w.lambda_cl * consistency + w.lambda_sl * smoothness +
              w.beta * params_squared_norm;
  return out;
}

}  // namespace stagerec
