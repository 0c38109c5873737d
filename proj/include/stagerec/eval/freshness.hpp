#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stagerec {

/// Publication-recency windows, in stage indices. An item published at stage
/// p counts as "new" when p >= new_from_stage and as "historical" when
/// p <= historical_until_stage.
struct FreshnessWindows {
  std::int32_t new_from_stage = 0;
  std::int32_t historical_until_stage = 0;
};

/// One user's recommendation list (top-K item indices, best first).
struct TopList {
  std::int32_t user = 0;
  std::vector<std::int32_t> items;
};

/// Composition statistics of a set of recommendation lists.
struct FreshnessStats {
  double new_pct = 0;         // mean fraction of new items per list
  double historical_pct = 0;  // mean fraction of historical items per list
  std::optional<double> nrank;  // mean 0-based position of new items
  std::optional<double> orank;  // mean 0-based position of historical items
  std::size_t n_lists = 0;
};

/// Aggregates freshness statistics over lists. Rank means average only over
/// lists that contain at least one item of the category; if no list does,
/// the rank stays empty rather than defaulting to a sentinel.
inline FreshnessStats freshnessStats(const std::vector<TopList>& lists,
                                     const std::vector<std::int32_t>& publish_stage,
                                     const FreshnessWindows& w) {
  FreshnessStats out;
  out.n_lists = lists.size();
  if (lists.empty()) return out;

  double new_frac_sum = 0, hist_frac_sum = 0;
  double nrank_sum = 0, orank_sum = 0;
  std::size_t nrank_lists = 0, orank_lists = 0;

  for (const auto& list : lists) {
    if (list.items.empty()) throw std::invalid_argument("freshness: empty recommendation list");
    std::size_t n_new = 0, n_hist = 0;
    double new_pos_sum = 0, hist_pos_sum = 0;
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      const auto item = list.items[r];
      if (item < 0 || static_cast<std::size_t>(item) >= publish_stage.size()) {
        throw std::out_of_range("freshness: item index outside publish table");
      }
      const auto p = publish_stage[static_cast<std::size_t>(item)];
      if (p >= w.new_from_stage) {
        ++n_new;
        new_pos_sum += static_cast<double>(r);
      }
      if (p <= w.historical_until_stage) {
        ++n_hist;
        hist_pos_sum += static_cast<double>(r);
      }
    }
    const double len = static_cast<double>(list.items.size());
    new_frac_sum += static_cast<double>(n_new) / len;
    hist_frac_sum += static_cast<double>(n_hist) / len;
    if (n_new > 0) {
      nrank_sum += new_pos_sum / static_cast<double>(n_new);
      ++nrank_lists;
    }
    if (n_hist > 0) {
      orank_sum += hist_pos_sum / static_cast<double>(n_hist);
      ++orank_lists;
    }
  }

  const double n = static_cast<double>(lists.size());
  out.new_pct = new_frac_sum / n;
  out.historical_pct = hist_frac_sum / n;
  if (nrank_lists > 0) out.nrank = nrank_sum / static_cast<double>(nrank_lists);
  if (orank_lists > 0) out.orank = orank_sum / static_cast<double>(orank_lists);
  return out;
}

/// Splits users into activity terciles by click count: returns one label per
/// user, 2 = high, 1 = medium, 0 = low. Ties and remainders are resolved
/// deterministically (count descending, then user index ascending; remainder
/// users land in the more active groups).
inline std::vector<std::int8_t> activityTerciles(const std::vector<std::size_t>& click_counts) {
  const std::size_t n = click_counts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (click_counts[a] != click_counts[b]) return click_counts[a] > click_counts[b];
    return a < b;
  });
  std::vector<std::int8_t> label(n, 0);
  const std::size_t base = n / 3, rem = n % 3;
  const std::size_t high_end = base + (rem > 0 ? 1 : 0);
  const std::size_t med_end = high_end + base + (rem > 1 ? 1 : 0);
  for (std::size_t r = 0; r < n; ++r) {
    label[order[r]] = r < high_end ? std::int8_t(2) : (r < med_end ? std::int8_t(1) : std::int8_t(0));
  }
  return label;
}

/// Freshness statistics per user group: activity terciles ("high", "medium",
/// "low") plus "all" covering every list.
inline std::map<std::string, FreshnessStats> freshnessByGroup(
    const std::vector<TopList>& lists, const std::vector<std::int32_t>& publish_stage,
    const std::vector<std::size_t>& user_click_counts, const FreshnessWindows& w) {
  const auto label = activityTerciles(user_click_counts);
  std::vector<TopList> high, med, low;
  for (const auto& list : lists) {
    if (list.user < 0 || static_cast<std::size_t>(list.user) >= label.size()) {
      throw std::out_of_range("freshness: list user outside click-count table");
    }
    switch (label[static_cast<std::size_t>(list.user)]) {
      case 2: high.push_back(list); break;
      case 1: med.push_back(list); break;
      default: low.push_back(list); break;
    }
  }
  std::map<std::string, FreshnessStats> out;
  out["all"] = freshnessStats(lists, publish_stage, w);
  out["high"] = freshnessStats(high, publish_stage, w);
  out["medium"] = freshnessStats(med, publish_stage, w);
  out["low"] = freshnessStats(low, publish_stage, w);
  return out;
}

}  // namespace stagerec
