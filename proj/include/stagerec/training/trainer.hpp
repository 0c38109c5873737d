#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/data/sampling.hpp"
#include "stagerec/data/split.hpp"
#include "stagerec/data/stages.hpp"
#include "stagerec/eval/metrics.hpp"
#include "stagerec/model/forward.hpp"
#include "stagerec/model/infer.hpp"
#include "stagerec/numerics/adam.hpp"
#include "stagerec/training/checkpoint.hpp"
#include "stagerec/training/config.hpp"

namespace stagerec {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;  // mean batch objective
  double val_auc = 0;
  std::size_t n_batches = 0;
};

template <class Real>
struct TrainResult {
  Checkpoint<Real> best;  // parameters at the best validation AUC
  std::vector<EpochLog> epochs;
};

/// Scores held-out impressions with the inference path. Representations are
/// taken at `scoring_stage` (the last trained stage): held-out stages have no
/// trained subgraph, so scoring them with the newest trained state is the
/// leakage-safe choice.
template <class Real>
std::vector<Impression> scoreImpressions(const EvalTables<Real>& tables,
                                         const ModelParams<Real>& params,
                                         const ModelWiring& wiring, const ModelHyper& hyper,
                                         const StagePartition& part,
                                         const std::vector<EvalCandidates>& candidates,
                                         std::int32_t scoring_stage) {
  const Tensor<Real> items = fusedItemMatrix(tables, wiring, scoring_stage);
  std::vector<Impression> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const Tensor<Real> user =
        fusedUserVector(tables, params, wiring, part, cand.user, scoring_stage, hyper);
    Impression imp;
    imp.user = cand.user;
    imp.stage = cand.stage;
    imp.items = cand.items;
    imp.labels = cand.labels;
    imp.scores = scoreCandidates(user, items, cand.items);
    for (double s : imp.scores) {
      // Runtime condition (diverged parameters), not an API misuse: callers
      // distinguish it from the invalid_argument family.
      if (!std::isfinite(s)) {
        throw std::runtime_error("non-finite candidate score for user " +
                                 std::to_string(cand.user));
      }
    }
    out.push_back(std::move(imp));
  }
  return out;
}

namespace detail {

template <class Real>
void validateFeatures(const TrainConfig& cfg, const Tensor<Real>* features,
                      std::size_t n_items) {
  if (features == nullptr) {
    if (cfg.feature_dim != 0) {
      throw std::invalid_argument("training: config declares feature_dim " +
                                  std::to_string(cfg.feature_dim) + " but no features supplied");
    }
    return;
  }
  if (cfg.feature_dim <= 0) {
    throw std::invalid_argument("training: features supplied but config feature_dim is 0");
  }
  if (features->rank() != 2 || features->dim(0) != n_items ||
      features->dim(1) != static_cast<std::size_t>(cfg.feature_dim)) {
    throw std::invalid_argument("training: feature matrix must be (n_items x feature_dim)");
  }
}

}  // namespace detail

/// End-to-end training: per-epoch forward-table rebuild, mini-batch Adam on
/// the composite objective, early stopping on validation AUC. The returned
/// checkpoint holds the parameters of the best validation epoch.
///
/// Within an epoch, gradients are taken at the epoch-start parameter values
/// (the forward tables are rebuilt once per epoch, not per batch); optimizer
/// steps still apply per batch. This staleness-for-speed trade is deliberate
/// and recorded in the module notes.
template <class Real>
TrainResult<Real> runTraining(const TrainConfig& cfg, const StagePartition& part,
                              const DatasetSplit& split, const Tensor<Real>* features) {
  cfg.validate();
  detail::validateFeatures(cfg, features, part.nItems());
  if (split.train_stages.empty()) throw std::invalid_argument("training: no train stages");
  if (split.val_impressions.empty()) {
    throw std::invalid_argument("training: validation stage has no clicks; early stopping needs them");
  }

  const ModelWiring wiring = ModelWiring::fromAblation(cfg.ablationFlag());
  ModelHyper hyper = cfg.hyper();
  hyper.validate();
  const LossWeights<Real> weights = cfg.lossWeights<Real>();

  ModelParams<Real> params =
      initModelParams<Real>(wiring, hyper, part.nUsers(), part.nItems(),
                            static_cast<std::size_t>(cfg.feature_dim), cfg.seed);

  AdamConfig<Real> acfg;
  acfg.learning_rate = static_cast<Real>(cfg.learning_rate);
  acfg.weight_decay = static_cast<Real>(cfg.weight_decay);
  std::vector<const Tensor<Real>*> slots;
  params.forEachTensor([&](const std::string&, const Tensor<Real>& t) { slots.push_back(&t); });
  AdamState<Real> adam = AdamState<Real>::init(slots, acfg);

  const GraphSet graphs = buildGraphSet(part, split.train_stages);

  // Positive tuples are fixed; negatives are resampled every epoch.
  std::vector<BatchTuple> base;
  for (std::int32_t t : split.train_stages) {
    for (const Edge& e : part.stageEdges(t)) {
      base.push_back(BatchTuple{e.user, t, e.item, {}});
    }
  }
  if (base.empty()) throw std::invalid_argument("training: no train-stage interactions");

  TrainResult<Real> result;
  result.best.config = cfg;
  result.best.n_users = part.nUsers();
  result.best.n_items = part.nItems();
  result.best.params = params;

  const std::int32_t scoring_stage = split.train_stages.back();
  double best_auc = -1.0;
  int since_improve = 0;

  // Non-finite values are detected at several depths (LSTM state checks,
  // impression validation, optional tape instrumentation), all as
  // std::runtime_error. Rethrown here with the training position so a
  // diverging run always fails with the same actionable shape.
  const auto diverged = [](const std::exception& e, const std::string& where) {
    return std::runtime_error("training diverged: " + std::string(e.what()) + " (" + where + ")");
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng erng(deriveSeed(cfg.seed, "train/epoch", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    erng.shuffle(order);

    Tape<Real> tape;
    const ParamVars<Real> pv = liftParams(tape, params);
    DropoutPlan<Real> dropout{static_cast<Real>(cfg.dropout), &erng};
    ForwardTables<Real> tables;
    try {
      tables = buildForwardTables(tape, pv, wiring, hyper, graphs, features, dropout);
    } catch (const std::runtime_error& e) {
      throw diverged(e, "epoch " + std::to_string(epoch) + " forward tables");
    }
    const std::size_t table_mark = tape.mark();

    double loss_sum = 0;
    std::size_t n_batches = 0;
    const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t end = std::min(order.size(), start + bsz);
      std::vector<BatchTuple> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        BatchTuple tp = base[order[k]];
        tp.neg_items = sampleNegatives(part, tp.user, tp.stage,
                                       static_cast<std::size_t>(cfg.n_neg), erng)
                           .items;
        batch.push_back(std::move(tp));
      }

      double loss_value = 0;
      try {
        tape.truncate(table_mark);
        const auto bf = buildBatchForward(tape, tables, pv, wiring, part, batch, hyper,
                                          static_cast<Real>(cfg.tau), dropout);
        const auto loss = batchObjective(tape, bf, weights);
        loss_value = static_cast<double>(tape.value(loss)[0]);
        if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite loss");
        tape.backward(loss);

        std::vector<Tensor<Real>> grad_buf;
        grad_buf.reserve(pv.ordered.size());
        for (const auto var : pv.ordered) grad_buf.push_back(tape.gradOrZero(var));
        std::vector<const Tensor<Real>*> grad_ptrs;
        grad_ptrs.reserve(grad_buf.size());
        for (const auto& g : grad_buf) grad_ptrs.push_back(&g);
        std::vector<Tensor<Real>*> param_ptrs;
        param_ptrs.reserve(grad_buf.size());
        params.forEachTensor(
            [&](const std::string&, Tensor<Real>& t) { param_ptrs.push_back(&t); });
        adamStep(param_ptrs, grad_ptrs, adam);
      } catch (const std::runtime_error& e) {
        throw diverged(e, "epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(n_batches));
      }

      loss_sum += loss_value;
      ++n_batches;
    }

    double val_auc = 0;
    try {
      const EvalTables<Real> ev = buildEvalTables(params, wiring, hyper, graphs, features);
      const auto impressions =
          scoreImpressions(ev, params, wiring, hyper, part, split.val_impressions, scoring_stage);
      val_auc = evaluateRanking(impressions).auc;
    } catch (const std::runtime_error& e) {
      throw diverged(e, "validation after epoch " + std::to_string(epoch));
    }

    result.epochs.push_back(
        EpochLog{epoch, n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0, val_auc,
                 n_batches});

    if (val_auc > best_auc) {
      best_auc = val_auc;
      since_improve = 0;
      result.best.params = params;
      result.best.best_epoch = epoch;
      result.best.best_val_auc = val_auc;
    } else if (++since_improve >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace stagerec
