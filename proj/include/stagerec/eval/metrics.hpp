#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace stagerec {

/// One scored evaluation unit.
struct Impression {
  std::int32_t user = 0;
  std::int32_t stage = 0;
  std::vector<std::int32_t> items;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  void validate() const {
    if (items.size() != scores.size() || items.size() != labels.size()) {
      throw std::invalid_argument("impression: items/scores/labels must be parallel");
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw std::invalid_argument("impression: non-finite score");
    }
  }
};

/// AUC of one impression: fraction of (positive, negative) pairs ranked
/// correctly, ties credited 0.5. Computed with midranks, which equals the
/// brute-force pair count exactly (both are sums of halves). Requires at
/// least one positive and one negative, else nullopt.
inline std::optional<double> aucImpression(const std::vector<double>& scores,
                                           const std::vector<std::uint8_t>& labels) {
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1u : 0u;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie runs (1-based); rank-sum of positives gives U.
  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace detail {

/// Candidate order for rank metrics: score descending, ties broken by item
/// index ascending (deterministic).
inline std::vector<std::size_t> rankOrder(const std::vector<double>& scores,
                                          const std::vector<std::int32_t>& items) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  return order;
}

}  // namespace detail

/// Reciprocal rank of the highest-ranked positive; nullopt without positives.
inline std::optional<double> mrrImpression(const std::vector<double>& scores,
                                           const std::vector<std::uint8_t>& labels,
                                           const std::vector<std::int32_t>& items) {
  const auto order = detail::rankOrder(scores, items);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]]) return 1.0 / static_cast<double>(r + 1);
  }
  return std::nullopt;
}

/// nDCG@K with binary relevance; IDCG places all positives at the top and
/// truncates at K. nullopt without positives.
inline std::optional<double> ndcgImpression(const std::vector<double>& scores,
                                            const std::vector<std::uint8_t>& labels,
                                            const std::vector<std::int32_t>& items,
                                            std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg: K must be >= 1");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1u : 0u;
  if (n_pos == 0) return std::nullopt;

  const auto order = detail::rankOrder(scores, items);
  double dcg = 0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    if (labels[order[r]]) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
  }
  double idcg = 0;
  for (std::size_t r = 0; r < std::min(k, n_pos); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  }
  return dcg / idcg;
}

struct RankingMetrics {
  double auc = 0;
  double mrr = 0;
  double ndcg5 = 0;
  double ndcg10 = 0;
  std::size_t n_impressions = 0;
  std::size_t auc_skipped = 0;   // impressions without a negative (or positive)
  std::size_t rank_skipped = 0;  // impressions without a positive
};

/// Dataset-level means. Impressions missing the needed label class are
/// skipped per metric and counted.
inline RankingMetrics evaluateRanking(const std::vector<Impression>& impressions) {
  RankingMetrics m;
  m.n_impressions = impressions.size();
  double auc_sum = 0, mrr_sum = 0, n5_sum = 0, n10_sum = 0;
  std::size_t auc_n = 0, rank_n = 0;
  for (const auto& imp : impressions) {
    imp.validate();
    if (const auto a = aucImpression(imp.scores, imp.labels)) {
      auc_sum += *a;
      ++auc_n;
    } else {
      ++m.auc_skipped;
    }
    const auto rr = mrrImpression(imp.scores, imp.labels, imp.items);
    if (rr) {
      mrr_sum += *rr;
      n5_sum += *ndcgImpression(imp.scores, imp.labels, imp.items, 5);
      n10_sum += *ndcgImpression(imp.scores, imp.labels, imp.items, 10);
      ++rank_n;
    } else {
      ++m.rank_skipped;
    }
  }
  if (auc_n > 0) m.auc = auc_sum / static_cast<double>(auc_n);
  if (rank_n > 0) {
    m.mrr = mrr_sum / static_cast<double>(rank_n);
    m.ndcg5 = n5_sum / static_cast<double>(rank_n);
    m.ndcg10 = n10_sum / static_cast<double>(rank_n);
  }
  return m;
}

}  // namespace stagerec
