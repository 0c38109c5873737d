#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "stagerec/data/split.hpp"
#include "stagerec/encoders/embed.hpp"
#include "stagerec/encoders/graph.hpp"
#include "stagerec/model/forward.hpp"
#include "stagerec/model/params.hpp"
#include "stagerec/objective/scoring.hpp"
#include "stagerec/temporal/aggregate.hpp"
#include "stagerec/temporal/evolve.hpp"
#include "stagerec/temporal/prefix.hpp"

namespace stagerec {

/// Evaluation-mode representation tables (plain tensors, no dropout, no
/// gradients). Mirrors buildForwardTables; the two are cross-checked in the
/// test suite.
template <class Real>
struct EvalTables {
  Tensor<Real> user_base, item_base;
  Tensor<Real> user_global, item_global;  // empty under no_gpm
  std::vector<Tensor<Real>> user_evolved, item_evolved;
};

template <class Real>
EvalTables<Real> buildEvalTables(const ModelParams<Real>& params, const ModelWiring& wiring,
                                 const ModelHyper& hyper, const GraphSet& graphs,
                                 std::type_identity_t<const Tensor<Real>*> features) {
  EvalTables<Real> t;
  t.user_base = params.user_emb;
  if (features != nullptr) {
    if (!params.hasItemProjection()) {
      throw std::invalid_argument("eval tables: features supplied but no projection parameter");
    }
    t.item_base = projectFeatures(*features, params.item_projection);
  } else {
    if (params.item_emb.empty()) {
      throw std::invalid_argument("eval tables: no item embedding parameter");
    }
    t.item_base = params.item_emb;
  }

  if (wiring.global_branch) {
    auto prop = propagateLayers(graphs.global, t.user_base, t.item_base, hyper.layers_global);
    t.user_global = std::move(prop.user_sum);
    t.item_global = std::move(prop.item_sum);
  }
  if (!wiring.local) return t;

  const Tensor<Real>& seed_u = wiring.global_branch ? t.user_global : t.user_base;
  const Tensor<Real>& seed_i = wiring.global_branch ? t.item_global : t.item_base;
  std::vector<Tensor<Real>> user_stage, item_stage;
  for (const auto& adj : graphs.stages) {
    auto prop = propagateLayers(adj, seed_u, seed_i, hyper.layers_stage);
    user_stage.push_back(std::move(prop.user_sum));
    item_stage.push_back(std::move(prop.item_sum));
  }
  if (wiring.evolution) {
    t.user_evolved = shortTermEvolve(user_stage, params.user_lstm);
    t.item_evolved = shortTermEvolve(item_stage, params.item_lstm);
  } else {
    t.user_evolved = std::move(user_stage);
    t.item_evolved = std::move(item_stage);
  }
  return t;
}

/// Fused item representation for every item at one stage: evolved + global
/// (whichever branches are wired).
template <class Real>
Tensor<Real> fusedItemMatrix(const EvalTables<Real>& t, const ModelWiring& wiring,
                             std::int32_t stage) {
  const Tensor<Real>* evolved =
      wiring.local ? &t.item_evolved.at(static_cast<std::size_t>(stage)) : nullptr;
  const Tensor<Real>* global = wiring.global_branch ? &t.item_global : nullptr;
  if (!evolved && !global) throw std::logic_error("fused items: no branches wired");
  Tensor<Real> out = evolved ? *evolved : *global;
  if (evolved && global) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*global)[i];
  }
  return out;
}

/// Fused user representation at one stage. Users with no clicks by `stage`
/// fall back to their global embedding alone (zero under no_gpm).
template <class Real>
Tensor<Real> fusedUserVector(const EvalTables<Real>& t, const ModelParams<Real>& params,
                             const ModelWiring& wiring, const StagePartition& part,
                             std::int32_t user, std::int32_t stage, const ModelHyper& hyper) {
  const std::size_t d = hyper.d;
  Tensor<Real> out({d});
  const auto u = static_cast<std::size_t>(user);
  const bool empty_history = part.cumulativeClicks(user, stage) == 0;

  if (wiring.global_branch) {
    const Real* g = t.user_global.row(u);
    for (std::size_t k = 0; k < d; ++k) out[k] += g[k];
  }
  if (!wiring.local || empty_history) return out;

  const auto& evolved = t.user_evolved.at(static_cast<std::size_t>(stage));
  const Real* e = evolved.row(u);
  for (std::size_t k = 0; k < d; ++k) out[k] += e[k];

  if (wiring.hasAttention()) {
    const PrefixIndices prefix =
        buildPrefixIndices(part, user, stage, static_cast<std::int32_t>(hyper.m_max));
    if (!prefix.empty()) {
      Tensor<Real> tokens = assemblePrefixTokens(
          prefix, t.item_evolved.at(static_cast<std::size_t>(stage)), params.positional);
      Tensor<Real> agg = longRangeAggregate(tokens, params.attention);
      for (std::size_t k = 0; k < d; ++k) out[k] += agg[k];
    }
  }
  return out;
}

/// Scores one impression's candidates; probabilities as double for stable
/// downstream metric arithmetic.
template <class Real>
std::vector<double> scoreCandidates(const Tensor<Real>& fused_user,
                                    const Tensor<Real>& fused_items,
                                    const std::vector<std::int32_t>& items) {
  const std::size_t d = fused_user.size();
  std::vector<double> scores;
  scores.reserve(items.size());
  for (std::int32_t item : items) {
    const Real* row = fused_items.row(static_cast<std::size_t>(item));
    double dot = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += static_cast<double>(fused_user[k]) * static_cast<double>(row[k]);
    }
    scores.push_back(logistic(dot));
  }
  return scores;
}

/// Top-k recommendation list for a user over the full catalogue, excluding
/// items the user clicked in stages <= `stage` (already-consumed news).
/// Ties break by item index ascending for determinism.
template <class Real>
std::vector<std::int32_t> topKForUser(const Tensor<Real>& fused_user,
                                      const Tensor<Real>& fused_items,
                                      const StagePartition& part, std::int32_t user,
                                      std::int32_t stage, std::size_t k) {
  const std::size_t n_items = fused_items.dim(0);
  const std::size_t d = fused_user.size();
  std::vector<std::pair<double, std::int32_t>> scored;
  scored.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    bool seen = false;
    for (std::int32_t s = 0; s <= stage && !seen; ++s) {
      seen = part.userClickedInStage(user, s, static_cast<std::int32_t>(i));
    }
    if (seen) continue;
    const Real* row = fused_items.row(i);
    double dot = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += static_cast<double>(fused_user[j]) * static_cast<double>(row[j]);
    }
    scored.emplace_back(dot, static_cast<std::int32_t>(i));
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<std::int32_t> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace stagerec
