#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stagerec/core/tensor.hpp"
#include "stagerec/data/stages.hpp"

namespace stagerec {

/// Index form of a user's click prefix at a stage: the retained (most recent,
/// at most m_max) clicked items in chronological order, plus the positional
/// row assigned to each (0-based row into the positional table; the oldest
/// retained click gets row 0).
struct PrefixIndices {
  std::vector<std::int32_t> items;
  std::vector<std::int32_t> positions;

  std::size_t length() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

inline PrefixIndices buildPrefixIndices(const StagePartition& part, std::int32_t user,
                                        std::int32_t stage, std::int32_t m_max) {
  if (m_max < 1) throw std::invalid_argument("prefix: m_max must be >= 1");
  if (stage < 0 || stage >= part.nStages()) {
    throw std::out_of_range("prefix: stage " + std::to_string(stage) + " of " +
                            std::to_string(part.nStages()));
  }
  const auto& clicks = part.userClicks(user);
  std::size_t end = 0;
  while (end < clicks.size() && clicks[end].stage <= stage) ++end;
  const std::size_t keep = std::min<std::size_t>(end, static_cast<std::size_t>(m_max));
  PrefixIndices out;
  out.items.reserve(keep);
  out.positions.reserve(keep);
  for (std::size_t k = end - keep; k < end; ++k) {
    out.items.push_back(clicks[k].item);
    out.positions.push_back(static_cast<std::int32_t>(out.items.size() - 1));
  }
  return out;
}

/// Token matrix of a prefix: row j = item_table[items[j]] + positional[positions[j]].
/// All item rows come from the same (stage-t) table — old clicks are seen
/// through the current stage's representation.
template <class Real>
Tensor<Real> assemblePrefixTokens(const PrefixIndices& prefix, const Tensor<Real>& item_table,
                                  const Tensor<Real>& positional) {
  if (item_table.rank() != 2 || positional.rank() != 2 ||
      item_table.dim(1) != positional.dim(1)) {
    throw std::invalid_argument("prefix tokens: item table " + item_table.shapeString() +
                                " vs positional " + positional.shapeString());
  }
  const std::size_t d = item_table.dim(1);
  Tensor<Real> tokens({prefix.length(), d});
  for (std::size_t j = 0; j < prefix.length(); ++j) {
    const auto item = static_cast<std::size_t>(prefix.items[j]);
    const auto pos = static_cast<std::size_t>(prefix.positions[j]);
    if (item >= item_table.dim(0)) throw std::out_of_range("prefix tokens: item index");
    if (pos >= positional.dim(0)) throw std::out_of_range("prefix tokens: positional index");
    const Real* it = item_table.row(item);
    const Real* pt = positional.row(pos);
    Real* out = tokens.row(j);
    for (std::size_t k = 0; k < d; ++k) out[k] = it[k] + pt[k];
  }
  return tokens;
}

}  // namespace stagerec
