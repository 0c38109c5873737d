#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/data/sampling.hpp"
#include "stagerec/data/stages.hpp"

namespace stagerec {

/// One evaluation query: a positive item the user actually clicked in the
/// held-out stage plus sampled unclicked candidates.
struct EvalCandidates {
  std::int32_t user = 0;
  std::int32_t stage = 0;
  std::vector<std::int32_t> items;
  std::vector<std::uint8_t> labels;  // parallel to items, 1 = clicked
  bool degenerate = false;           // negative pool was short or empty
};

/// Stage-level chronological split: the last two stages are held out for
/// validation and testing, everything earlier is trainable.
struct DatasetSplit {
  std::vector<std::int32_t> train_stages;
  std::int32_t val_stage = 0;
  std::int32_t test_stage = 0;
  std::vector<EvalCandidates> val_impressions;
  std::vector<EvalCandidates> test_impressions;
};

namespace detail {

inline std::vector<EvalCandidates> buildImpressions(const StagePartition& part, std::int32_t stage,
                                                    std::size_t n_neg, Rng& rng) {
  std::vector<EvalCandidates> out;
  for (const Edge& e : part.stageEdges(stage)) {
    EvalCandidates imp;
    imp.user = e.user;
    imp.stage = stage;
    imp.items.push_back(e.item);
    imp.labels.push_back(1);
    NegativeSample neg = sampleNegatives(part, e.user, stage, n_neg, rng);
    imp.degenerate = neg.degenerate;
    for (std::int32_t i : neg.items) {
      imp.items.push_back(i);
      imp.labels.push_back(0);
    }
    out.push_back(std::move(imp));
  }
  return out;
}

}  // namespace detail

/// Splits a partition into train stages, a validation stage (T-2) and a test
/// stage (T-1), and materializes evaluation impressions for the held-out
/// stages. Requires at least three stages.
inline DatasetSplit chronologicalSplit(const StagePartition& part, std::size_t n_eval_negatives,
                                       std::uint64_t seed) {
  const std::int32_t t = part.nStages();
  if (t < 3) {
    throw std::invalid_argument(
        "split: need at least 3 stages (train/val/test), got " + std::to_string(t) +
        "; use a smaller window or more data");
  }
  DatasetSplit split;
  for (std::int32_t s = 0; s < t - 2; ++s) split.train_stages.push_back(s);
  split.val_stage = t - 2;
  split.test_stage = t - 1;

  Rng val_rng(deriveSeed(seed, "split/val"));
  Rng test_rng(deriveSeed(seed, "split/test"));
  split.val_impressions = detail::buildImpressions(part, split.val_stage, n_eval_negatives, val_rng);
  split.test_impressions =
      detail::buildImpressions(part, split.test_stage, n_eval_negatives, test_rng);
  return split;
}

}  // namespace stagerec
