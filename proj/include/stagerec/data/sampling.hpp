#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/data/stages.hpp"

namespace stagerec {

struct NegativeSample {
  std::vector<std::int32_t> items;
  /// Set when the candidate pool could not supply n distinct unseen items
  /// (smaller pool sampled with replacement; empty pool yields no items).
  bool degenerate = false;
};

/// Draws n negatives for a (user, stage) example: items available at that
/// stage (first observed at or before it) that the user did not click in it.
/// Uniform and without replacement when the pool allows it.
///
/// The availability restriction matters: an article that has not appeared
/// yet is not a candidate anyone could have been shown, and letting it soak
/// up not-clicked gradient would push every freshly published item to the
/// bottom of the ranking before its first reader arrives.
inline NegativeSample sampleNegatives(const StagePartition& part, std::int32_t user,
                                      std::int32_t stage, std::size_t n, Rng& rng) {
  const auto& clicked = part.userStageItems(user, stage);
  const auto n_items = static_cast<std::size_t>(part.nItems());
  // Everything the user clicked in the stage is available at it, so the
  // difference is exact.
  const std::size_t pool =
      static_cast<std::size_t>(part.nItemsAvailable(stage)) - clicked.size();

  NegativeSample out;
  if (pool == 0) {
    out.degenerate = true;
    return out;
  }

  auto inPool = [&](std::int32_t item) {
    return part.itemAvailableAt(item, stage) &&
           !std::binary_search(clicked.begin(), clicked.end(), item);
  };

  if (pool < n) {
    // Pool too small for distinct draws: enumerate it and sample with
    // replacement so the caller still gets n labels.
    std::vector<std::int32_t> candidates;
    candidates.reserve(pool);
    for (std::int32_t i = 0; i < part.nItems(); ++i) {
      if (inPool(i)) candidates.push_back(i);
    }
    out.items.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      out.items.push_back(candidates[rng.below(candidates.size())]);
    }
    out.degenerate = true;
    return out;
  }

  if (pool <= 2 * n) {
    // Rejection would thrash on a tight pool; enumerate and partially shuffle.
    std::vector<std::int32_t> candidates;
    candidates.reserve(pool);
    for (std::int32_t i = 0; i < part.nItems(); ++i) {
      if (inPool(i)) candidates.push_back(i);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
      std::swap(candidates[k], candidates[j]);
      out.items.push_back(candidates[k]);
    }
    return out;
  }

  // Large pool: rejection sampling against availability, clicked items and
  // prior draws.
  out.items.reserve(n);
  while (out.items.size() < n) {
    const auto item = static_cast<std::int32_t>(rng.below(n_items));
    if (!inPool(item)) continue;
    if (std::find(out.items.begin(), out.items.end(), item) != out.items.end()) continue;
    out.items.push_back(item);
  }
  return out;
}

}  // namespace stagerec
