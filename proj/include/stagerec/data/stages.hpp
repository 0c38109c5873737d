#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagerec/data/interactions.hpp"

namespace stagerec {

struct Edge {
  std::int32_t user = 0;
  std::int32_t item = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct StageClick {
  std::int32_t item = 0;
  std::int32_t stage = 0;
};

/// Discretizes an interaction log into fixed-width chronological stages.
///
/// Stage t (0-based) covers [origin + t*w, origin + (t+1)*w) where origin is
/// the earliest timestamp; the last stage may be partially filled. Within a
/// stage, repeated clicks of the same (user, item) collapse to one edge and
/// one click-sequence entry (first occurrence kept).
class StagePartition {
 public:
  StagePartition(const InteractionLog& log, std::int64_t window_seconds)
      : window_(window_seconds),
        n_users_(static_cast<std::int32_t>(log.nUsers())),
        n_items_(static_cast<std::int32_t>(log.nItems())) {
    if (window_seconds <= 0) {
      throw std::invalid_argument("stage partition: window must be positive, got " +
                                  std::to_string(window_seconds));
    }
    if (log.records().empty()) {
      throw std::invalid_argument("stage partition: empty interaction log");
    }
    origin_ = log.minTs();
    n_stages_ = static_cast<std::int32_t>((log.maxTs() - origin_) / window_ + 1);

    stage_edges_.resize(static_cast<std::size_t>(n_stages_));
    user_clicks_.resize(static_cast<std::size_t>(n_users_));
    user_stage_items_.assign(static_cast<std::size_t>(n_users_),
                             std::vector<std::vector<std::int32_t>>(
                                 static_cast<std::size_t>(n_stages_)));

    // Records are time-ordered, so appending preserves chronology; the
    // per-user per-stage sorted sets double as the dedup filter. Items that
    // never appear keep the n_stages sentinel (available at no stage).
    item_first_stage_.assign(static_cast<std::size_t>(n_items_), n_stages_);
    for (const auto& r : log.records()) {
      const auto s = static_cast<std::int32_t>((r.ts - origin_) / window_);
      auto& first = item_first_stage_[static_cast<std::size_t>(r.item)];
      if (s < first) first = s;
      auto& items = user_stage_items_[static_cast<std::size_t>(r.user)][static_cast<std::size_t>(s)];
      const auto pos = std::lower_bound(items.begin(), items.end(), r.item);
      if (pos != items.end() && *pos == r.item) continue;
      items.insert(pos, r.item);
      user_clicks_[static_cast<std::size_t>(r.user)].push_back({r.item, s});
      stage_edges_[static_cast<std::size_t>(s)].push_back({r.user, r.item});
    }
    n_available_.assign(static_cast<std::size_t>(n_stages_), 0);
    for (const auto first : item_first_stage_) {
      for (std::int32_t t = first; t < n_stages_; ++t) {
        ++n_available_[static_cast<std::size_t>(t)];
      }
    }
    for (auto& edges : stage_edges_) {
      std::sort(edges.begin(), edges.end());
    }

    user_cumulative_.assign(static_cast<std::size_t>(n_users_),
                            std::vector<std::int32_t>(static_cast<std::size_t>(n_stages_), 0));
    for (std::int32_t u = 0; u < n_users_; ++u) {
      std::int32_t total = 0;
      for (std::int32_t t = 0; t < n_stages_; ++t) {
        total += static_cast<std::int32_t>(
            user_stage_items_[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)].size());
        user_cumulative_[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)] = total;
      }
    }
  }

  std::int32_t nStages() const { return n_stages_; }
  std::int32_t nUsers() const { return n_users_; }
  std::int32_t nItems() const { return n_items_; }
  std::int64_t windowSeconds() const { return window_; }
  std::int64_t origin() const { return origin_; }

  /// Deduplicated (user, item) edges of one stage, sorted by (user, item).
  const std::vector<Edge>& stageEdges(std::int32_t t) const {
    return stage_edges_.at(static_cast<std::size_t>(t));
  }

  /// Union of edges across the given stages, deduplicated and sorted.
  std::vector<Edge> unionEdges(const std::vector<std::int32_t>& stages) const {
    std::vector<Edge> all;
    for (std::int32_t t : stages) {
      const auto& e = stageEdges(t);
      all.insert(all.end(), e.begin(), e.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
  }

  /// The user's chronological click sequence (within-stage deduplicated).
  const std::vector<StageClick>& userClicks(std::int32_t u) const {
    return user_clicks_.at(static_cast<std::size_t>(u));
  }

  /// Items the user clicked in one stage, sorted ascending.
  const std::vector<std::int32_t>& userStageItems(std::int32_t u, std::int32_t t) const {
    return user_stage_items_.at(static_cast<std::size_t>(u)).at(static_cast<std::size_t>(t));
  }

  /// Cumulative distinct-click count m_t: clicks in stages 0..t inclusive.
  std::int32_t cumulativeClicks(std::int32_t u, std::int32_t t) const {
    return user_cumulative_.at(static_cast<std::size_t>(u)).at(static_cast<std::size_t>(t));
  }

  bool userClickedInStage(std::int32_t u, std::int32_t t, std::int32_t item) const {
    const auto& items = userStageItems(u, t);
    return std::binary_search(items.begin(), items.end(), item);
  }

  /// Stage of the item's first click anywhere in the log — the log-derivable
  /// proxy for its publication time. Items with no clicks return nStages().
  std::int32_t itemFirstStage(std::int32_t item) const {
    return item_first_stage_.at(static_cast<std::size_t>(item));
  }

  /// True once the item has been observed: its catalogue entry exists at
  /// stage t and it is a legitimate ranking candidate there.
  bool itemAvailableAt(std::int32_t item, std::int32_t t) const {
    return itemFirstStage(item) <= t;
  }

  /// Number of items available at stage t.
  std::int32_t nItemsAvailable(std::int32_t t) const {
    return n_available_.at(static_cast<std::size_t>(t));
  }

 private:
  std::int64_t window_;
  std::int64_t origin_ = 0;
  std::int32_t n_stages_ = 0;
  std::int32_t n_users_;
  std::int32_t n_items_;
  std::vector<std::vector<Edge>> stage_edges_;
  std::vector<std::vector<StageClick>> user_clicks_;
  std::vector<std::vector<std::vector<std::int32_t>>> user_stage_items_;
  std::vector<std::vector<std::int32_t>> user_cumulative_;
  std::vector<std::int32_t> item_first_stage_;
  std::vector<std::int32_t> n_available_;
};

inline StagePartition partitionStages(const InteractionLog& log, std::int64_t window_seconds) {
  return StagePartition(log, window_seconds);
}

}  // namespace stagerec
