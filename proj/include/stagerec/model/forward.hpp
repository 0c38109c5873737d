#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/data/split.hpp"
#include "stagerec/data/stages.hpp"
#include "stagerec/encoders/graph.hpp"
#include "stagerec/model/params.hpp"
#include "stagerec/objective/losses.hpp"
#include "stagerec/temporal/evolve.hpp"
#include "stagerec/temporal/prefix.hpp"

namespace stagerec {

/// Representation graphs: the global graph is the union of the
/// `global_stages` edges; local graphs cover each stage in `local_stages`.
/// Training passes the train stages for both, so no held-out interaction
/// leaks into trained parameters. At inference the two cadences differ: the
/// global encoder reflects the last training refresh, while the local chain
/// may extend through stages that are already observed history at scoring
/// time (never the stage being scored).
struct GraphSet {
  NormalizedAdjacency global;
  std::vector<NormalizedAdjacency> stages;

  std::size_t nStages() const { return stages.size(); }
};

inline GraphSet buildGraphSet(const StagePartition& part,
                              const std::vector<std::int32_t>& global_stages,
                              const std::vector<std::int32_t>& local_stages) {
  if (global_stages.empty()) throw std::invalid_argument("graphs: no train stages");
  GraphSet g{NormalizedAdjacency(part.unionEdges(global_stages), part.nUsers(), part.nItems()),
             {}};
  g.stages.reserve(local_stages.size());
  for (std::int32_t t : local_stages) {
    g.stages.emplace_back(part.stageEdges(t), part.nUsers(), part.nItems());
  }
  return g;
}

inline GraphSet buildGraphSet(const StagePartition& part,
                              const std::vector<std::int32_t>& train_stages) {
  return buildGraphSet(part, train_stages, train_stages);
}

/// Inverted dropout; `rng == nullptr` (evaluation) disables it.
template <class Real>
struct DropoutPlan {
  Real rate = Real(0);
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > Real(0); }
};

template <class Real>
typename Tape<Real>::Var applyDropout(Tape<Real>& tape, typename Tape<Real>::Var x,
                                      const DropoutPlan<Real>& plan) {
  if (!plan.active()) return x;
  const auto& v = tape.value(x);
  Tensor<Real> mask(v.shape());
  const Real keep = Real(1) - plan.rate;
  const Real inv = Real(1) / keep;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = (plan.rng->uniform() < static_cast<double>(plan.rate)) ? Real(0) : inv;
  }
  return tape.hadamard(x, tape.leaf(std::move(mask)));
}

/// Tape handles for every trainable tensor, plus the flat list in the same
/// fixed order as ModelParams::forEachTensor (the optimizer slot order).
template <class Real>
struct ParamVars {
  using Var = typename Tape<Real>::Var;
  Var user_emb, item_emb, item_projection;
  LstmVars<Real> user_lstm, item_lstm;
  std::vector<AttentionVars<Real>> attention;
  Var positional;
  std::vector<Var> ordered;
};

template <class Real>
LstmVars<Real> liftOneLstm(Tape<Real>& tape, const LstmWeights<Real>& w,
                           std::vector<typename Tape<Real>::Var>& ordered) {
  LstmVars<Real> v;
  auto lift = [&](const Tensor<Real>& t) {
    auto var = tape.leaf(t);
    ordered.push_back(var);
    return var;
  };
  // Same order as LstmWeights::forEach.
  v.wx_i = lift(w.wx_i); v.wh_i = lift(w.wh_i); v.b_i = lift(w.b_i);
  v.wx_f = lift(w.wx_f); v.wh_f = lift(w.wh_f); v.b_f = lift(w.b_f);
  v.wx_g = lift(w.wx_g); v.wh_g = lift(w.wh_g); v.b_g = lift(w.b_g);
  v.wx_o = lift(w.wx_o); v.wh_o = lift(w.wh_o); v.b_o = lift(w.b_o);
  return v;
}

template <class Real>
ParamVars<Real> liftParams(Tape<Real>& tape, const ModelParams<Real>& p) {
  ParamVars<Real> v;
  auto track = [&](typename Tape<Real>::Var var) {
    v.ordered.push_back(var);
    return var;
  };
  v.user_emb = track(tape.leaf(p.user_emb));
  if (!p.item_emb.empty()) v.item_emb = track(tape.leaf(p.item_emb));
  if (!p.item_projection.empty()) v.item_projection = track(tape.leaf(p.item_projection));
  if (p.hasLstm()) {
    v.user_lstm = liftOneLstm(tape, p.user_lstm, v.ordered);
    v.item_lstm = liftOneLstm(tape, p.item_lstm, v.ordered);
  }
  if (p.hasAttention()) {
    for (const auto& w : p.attention) {
      AttentionVars<Real> av{track(tape.leaf(w.wq)), track(tape.leaf(w.wk)),
                             track(tape.leaf(w.wv))};
      v.attention.push_back(av);
    }
    v.positional = track(tape.leaf(p.positional));
  }
  return v;
}

/// All model-wide representation tables on the tape, built once per epoch.
template <class Real>
struct ForwardTables {
  using Var = typename Tape<Real>::Var;
  Var user_base, item_base;      // e^0
  Var user_global, item_global;  // e^g (invalid under no_gpm)
  std::vector<Var> user_stage, item_stage;      // e^t per train stage
  std::vector<Var> user_evolved, item_evolved;  // evolved tables (== e^t under no_ste)
};

/// Assembles base -> global -> stage -> evolved tables. `features` (I x f)
/// switches items onto the projection path and must outlive the tape, as
/// must the graphs. Dropout (training only) is applied to LSTM outputs.
template <class Real>
ForwardTables<Real> buildForwardTables(Tape<Real>& tape, const ParamVars<Real>& pv,
                                       const ModelWiring& wiring, const ModelHyper& hyper,
                                       const GraphSet& graphs,
                                       std::type_identity_t<const Tensor<Real>*> features,
                                       const DropoutPlan<Real>& dropout) {
  ForwardTables<Real> t;
  t.user_base = pv.user_emb;
  if (features != nullptr) {
    if (!pv.item_projection.valid()) {
      throw std::invalid_argument("forward: features supplied but no projection parameter");
    }
    t.item_base = tape.matmul(tape.leaf(*features), pv.item_projection);
  } else {
    if (!pv.item_emb.valid()) {
      throw std::invalid_argument("forward: no item embedding parameter");
    }
    t.item_base = pv.item_emb;
  }

  if (wiring.global_branch) {
    auto [ug, ig] =
        propagationSumOnTape(tape, graphs.global, t.user_base, t.item_base, hyper.layers_global);
    t.user_global = ug;
    t.item_global = ig;
  }

  if (!wiring.local) return t;

  const auto seed_u = wiring.global_branch ? t.user_global : t.user_base;
  const auto seed_i = wiring.global_branch ? t.item_global : t.item_base;
  for (const auto& adj : graphs.stages) {
    auto [us, is] = propagationSumOnTape(tape, adj, seed_u, seed_i, hyper.layers_stage);
    t.user_stage.push_back(us);
    t.item_stage.push_back(is);
  }

  if (wiring.evolution) {
    // The recurrent chain runs on raw hidden states; dropout masks only the
    // downstream copies of each stage's output.
    auto user_h = shortTermEvolveOnTape(tape, t.user_stage, pv.user_lstm);
    auto item_h = shortTermEvolveOnTape(tape, t.item_stage, pv.item_lstm);
    for (auto h : user_h) t.user_evolved.push_back(applyDropout(tape, h, dropout));
    for (auto h : item_h) t.item_evolved.push_back(applyDropout(tape, h, dropout));
  } else {
    t.user_evolved = t.user_stage;
    t.item_evolved = t.item_stage;
  }
  return t;
}

/// One training example: a clicked (user, item) pair in a stage plus its
/// sampled negatives.
struct BatchTuple {
  std::int32_t user = 0;
  std::int32_t stage = 0;
  std::int32_t pos_item = 0;
  std::vector<std::int32_t> neg_items;
};

/// Per-user long-range aggregation results, cached per batch so a user
/// appearing in several tuples of one stage is attended once.
template <class Real>
using AggregateCache = std::map<std::pair<std::int32_t, std::int32_t>, typename Tape<Real>::Var>;

/// Residual attention layer with dropout on the sublayer output:
/// out = S + dropout(softmax(Q K^T / sqrt(d)) V).
template <class Real>
typename Tape<Real>::Var attentionLayerDropout(Tape<Real>& tape, typename Tape<Real>::Var s,
                                               const AttentionVars<Real>& w,
                                               const DropoutPlan<Real>& dropout) {
  const std::size_t d = tape.value(s).dim(1);
  auto q = tape.matmul(s, w.wq);
  auto k = tape.matmul(s, w.wk);
  auto v = tape.matmul(s, w.wv);
  auto scores = tape.scale(tape.matmulNT(q, k), Real(1) / std::sqrt(static_cast<Real>(d)));
  auto ctx = tape.matmul(tape.softmaxRows(scores), v);
  return tape.add(s, applyDropout(tape, ctx, dropout));
}

/// Long-range aggregated user vector (1 x d) at a stage; zero for users with
/// an empty prefix. Requires the aggregation branch.
template <class Real>
typename Tape<Real>::Var aggregatedUserOnTape(Tape<Real>& tape, const ForwardTables<Real>& tables,
                                              const ParamVars<Real>& pv,
                                              const StagePartition& part, std::int32_t user,
                                              std::int32_t stage, const ModelHyper& hyper,
                                              const DropoutPlan<Real>& dropout,
                                              AggregateCache<Real>& cache) {
  const auto key = std::make_pair(user, stage);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  typename Tape<Real>::Var result;
  const PrefixIndices prefix =
      buildPrefixIndices(part, user, stage, static_cast<std::int32_t>(hyper.m_max));
  if (prefix.empty()) {
    result = tape.leaf(Tensor<Real>({std::size_t(1), hyper.d}));
  } else {
    std::vector<std::size_t> item_rows(prefix.items.begin(), prefix.items.end());
    std::vector<std::size_t> pos_rows(prefix.positions.begin(), prefix.positions.end());
    auto tokens =
        tape.add(tape.gatherRows(tables.item_evolved.at(static_cast<std::size_t>(stage)),
                                 std::move(item_rows)),
                 tape.gatherRows(pv.positional, std::move(pos_rows)));
    for (const auto& w : pv.attention) {
      tokens = attentionLayerDropout(tape, tokens, w, dropout);
    }
    result = tape.sumRows(tokens);
  }
  cache.emplace(key, result);
  return result;
}

/// The scored forward pass of one mini-batch plus the regularizer terms that
/// depend on the batch's users.
template <class Real>
struct BatchForward {
  using Var = typename Tape<Real>::Var;
  std::vector<std::int32_t> stages;      // distinct stages present, ascending
  std::vector<Var> stage_predictions;    // per stage, {k} sigmoid outputs
  std::vector<std::vector<Real>> stage_labels;
  std::vector<std::int32_t> batch_users;  // distinct users, ascending
  Var consistency;  // invalid when wiring disables it or batch too small
  Var smoothness;   // invalid when wiring disables it
};

template <class Real>
BatchForward<Real> buildBatchForward(Tape<Real>& tape, const ForwardTables<Real>& tables,
                                     const ParamVars<Real>& pv, const ModelWiring& wiring,
                                     const StagePartition& part,
                                     const std::vector<BatchTuple>& tuples,
                                     const ModelHyper& hyper, Real tau,
                                     const DropoutPlan<Real>& dropout) {
  if (tuples.empty()) throw std::invalid_argument("batch forward: empty batch");
  if (!(tau > Real(0))) throw std::invalid_argument("batch forward: tau must be > 0");

  BatchForward<Real> bf;
  for (const auto& tp : tuples) {
    bf.batch_users.push_back(tp.user);
    if (wiring.local && (tp.stage < 0 ||
                         static_cast<std::size_t>(tp.stage) >= tables.user_evolved.size())) {
      throw std::out_of_range("batch forward: tuple stage " + std::to_string(tp.stage) +
                              " outside the trained stages");
    }
  }
  std::sort(bf.batch_users.begin(), bf.batch_users.end());
  bf.batch_users.erase(std::unique(bf.batch_users.begin(), bf.batch_users.end()),
                       bf.batch_users.end());

  // Group tuples by stage, ascending, preserving in-stage order.
  std::map<std::int32_t, std::vector<const BatchTuple*>> by_stage;
  for (const auto& tp : tuples) by_stage[tp.stage].push_back(&tp);

  AggregateCache<Real> agg_cache;
  for (const auto& [stage, stage_tuples] : by_stage) {
    std::vector<std::size_t> user_rows, item_rows;
    std::vector<Real> labels;
    for (const BatchTuple* tp : stage_tuples) {
      user_rows.push_back(static_cast<std::size_t>(tp->user));
      item_rows.push_back(static_cast<std::size_t>(tp->pos_item));
      labels.push_back(Real(1));
      for (std::int32_t neg : tp->neg_items) {
        user_rows.push_back(static_cast<std::size_t>(tp->user));
        item_rows.push_back(static_cast<std::size_t>(neg));
        labels.push_back(Real(0));
      }
    }

    // Fused user rows: evolved + aggregated + global, whichever are wired.
    std::vector<typename Tape<Real>::Var> user_parts;
    if (wiring.local) {
      user_parts.push_back(tape.gatherRows(
          tables.user_evolved.at(static_cast<std::size_t>(stage)), user_rows));
    }
    if (wiring.hasAttention()) {
      std::vector<typename Tape<Real>::Var> agg_rows;
      agg_rows.reserve(user_rows.size());
      for (std::size_t r : user_rows) {
        agg_rows.push_back(aggregatedUserOnTape(tape, tables, pv, part,
                                                static_cast<std::int32_t>(r), stage, hyper,
                                                dropout, agg_cache));
      }
      user_parts.push_back(tape.stackRows(agg_rows));
    }
    if (wiring.global_branch) {
      user_parts.push_back(tape.gatherRows(tables.user_global, user_rows));
    }

    std::vector<typename Tape<Real>::Var> item_parts;
    if (wiring.local) {
      item_parts.push_back(tape.gatherRows(
          tables.item_evolved.at(static_cast<std::size_t>(stage)), item_rows));
    }
    if (wiring.global_branch) {
      item_parts.push_back(tape.gatherRows(tables.item_global, item_rows));
    }

    auto fuse = [&tape](const std::vector<typename Tape<Real>::Var>& parts) {
      auto acc = parts.front();
      for (std::size_t i = 1; i < parts.size(); ++i) acc = tape.add(acc, parts[i]);
      return acc;
    };
    auto preds = tape.sigmoid(tape.rowwiseDot(fuse(user_parts), fuse(item_parts)));
    bf.stages.push_back(stage);
    bf.stage_predictions.push_back(preds);
    bf.stage_labels.push_back(std::move(labels));
  }

  // Consistency: align each batch user's evolved embedding with their own
  // global embedding against the other batch users, summed over all train
  // stages, averaged over the batch.
  if (wiring.hasConsistency()) {
    std::vector<std::size_t> rows(bf.batch_users.begin(), bf.batch_users.end());
    auto global_rows = tape.gatherRows(tables.user_global, rows);
    std::vector<typename Tape<Real>::Var> terms;
    for (const auto& evolved : tables.user_evolved) {
      auto logits = tape.scale(tape.matmulNT(tape.gatherRows(evolved, rows), global_rows),
                               Real(1) / tau);
      terms.push_back(tape.lseMinusDiagMean(logits));
    }
    bf.consistency = tape.weightedSum(terms, std::vector<Real>(terms.size(), Real(1)));
  }

  if (wiring.hasSmoothness() && tables.user_evolved.size() >= 2) {
    std::vector<std::size_t> rows(bf.batch_users.begin(), bf.batch_users.end());
    const Real inv_b = Real(1) / static_cast<Real>(rows.size());
    std::vector<typename Tape<Real>::Var> terms;
    typename Tape<Real>::Var prev = tape.gatherRows(tables.user_evolved.front(), rows);
    for (std::size_t t = 1; t < tables.user_evolved.size(); ++t) {
      auto cur = tape.gatherRows(tables.user_evolved[t], rows);
      terms.push_back(tape.sumSquares(tape.sub(cur, prev)));
      prev = cur;
    }
    bf.smoothness = tape.weightedSum(terms, std::vector<Real>(terms.size(), inv_b));
  }
  return bf;
}

/// Weighted batch objective on the tape: lambda_t * sum of per-stage BCE
/// means + the wired regularizers. The l2 term stays off the tape (it is
/// folded into the optimizer update).
template <class Real>
typename Tape<Real>::Var batchObjective(Tape<Real>& tape, const BatchForward<Real>& bf,
                                        const LossWeights<Real>& weights) {
  weights.validate();
  std::vector<typename Tape<Real>::Var> terms;
  std::vector<Real> coeffs;
  for (std::size_t s = 0; s < bf.stage_predictions.size(); ++s) {
    terms.push_back(tape.bceMean(bf.stage_predictions[s], bf.stage_labels[s],
                                 static_cast<Real>(kBceEps)));
    coeffs.push_back(weights.lambda_t);
  }
  if (bf.consistency.valid()) {
    terms.push_back(bf.consistency);
    coeffs.push_back(weights.lambda_cl);
  }
  if (bf.smoothness.valid()) {
    terms.push_back(bf.smoothness);
    coeffs.push_back(weights.lambda_sl);
  }
  return tape.weightedSum(terms, coeffs);
}

}  // namespace stagerec
