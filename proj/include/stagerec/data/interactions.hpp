#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stagerec/core/tensor.hpp"

namespace stagerec {

struct InteractionRecord {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int64_t ts = 0;
};

/// A click log with dense user/item vocabularies.
///
/// Dense indices are assigned in order of first appearance in the input, so
/// loading the same file twice yields identical assignments. Records are kept
/// sorted by timestamp (stable, so input order breaks ties) and exact
/// (user, item, ts) duplicates are dropped.
class InteractionLog {
 public:
  std::int32_t userIndex(const std::string& id) {
    auto [it, inserted] = user_index_.try_emplace(id, static_cast<std::int32_t>(user_ids_.size()));
    if (inserted) user_ids_.push_back(id);
    return it->second;
  }

  std::int32_t itemIndex(const std::string& id) {
    auto [it, inserted] = item_index_.try_emplace(id, static_cast<std::int32_t>(item_ids_.size()));
    if (inserted) item_ids_.push_back(id);
    return it->second;
  }

  std::optional<std::int32_t> findItem(const std::string& id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }

  void addRecord(const std::string& user_id, const std::string& item_id, std::int64_t ts) {
    if (ts < 0) {
      throw std::invalid_argument("interaction log: negative timestamp " + std::to_string(ts) +
                                  " for user '" + user_id + "'");
    }
    records_.push_back({userIndex(user_id), itemIndex(item_id), ts});
  }

  /// Sorts by timestamp and drops exact duplicate records. Must be called
  /// once after the last addRecord and before any read access.
  void finalize() {
    std::stable_sort(records_.begin(), records_.end(),
                     [](const InteractionRecord& a, const InteractionRecord& b) { return a.ts < b.ts; });
    std::vector<InteractionRecord> unique;
    unique.reserve(records_.size());
    // Duplicates share a timestamp, so after the sort they sit in a tie run;
    // scan each run for previously seen (user, item) pairs.
    std::size_t i = 0;
    while (i < records_.size()) {
      std::size_t j = i;
      while (j < records_.size() && records_[j].ts == records_[i].ts) ++j;
      const std::size_t run_start = unique.size();
      for (std::size_t k = i; k < j; ++k) {
        bool dup = false;
        for (std::size_t u = run_start; u < unique.size(); ++u) {
          if (unique[u].user == records_[k].user && unique[u].item == records_[k].item) {
            dup = true;
            break;
          }
        }
        if (dup) {
          ++duplicates_dropped_;
        } else {
          unique.push_back(records_[k]);
        }
      }
      i = j;
    }
    records_ = std::move(unique);
    finalized_ = true;
  }

  void attachItemFeatures(Tensor<double> features) {
    if (features.rank() != 2 || features.dim(0) != item_ids_.size()) {
      throw std::invalid_argument("interaction log: feature table " + features.shapeString() +
                                  " does not cover " + std::to_string(item_ids_.size()) + " items");
    }
    item_features_ = std::move(features);
  }

  const std::vector<InteractionRecord>& records() const {
    requireFinal();
    return records_;
  }
  std::size_t nUsers() const { return user_ids_.size(); }
  std::size_t nItems() const { return item_ids_.size(); }
  const std::string& userId(std::int32_t u) const { return user_ids_.at(static_cast<std::size_t>(u)); }
  const std::string& itemId(std::int32_t i) const { return item_ids_.at(static_cast<std::size_t>(i)); }
  std::size_t duplicatesDropped() const { return duplicates_dropped_; }
  const std::optional<Tensor<double>>& itemFeatures() const { return item_features_; }

  std::int64_t minTs() const {
    requireFinal();
    if (records_.empty()) throw std::runtime_error("interaction log: empty log has no timespan");
    return records_.front().ts;
  }
  std::int64_t maxTs() const {
    requireFinal();
    if (records_.empty()) throw std::runtime_error("interaction log: empty log has no timespan");
    return records_.back().ts;
  }

 private:
  void requireFinal() const {
    if (!finalized_) throw std::logic_error("interaction log: finalize() not called");
  }

  std::vector<InteractionRecord> records_;
  std::vector<std::string> user_ids_, item_ids_;
  std::unordered_map<std::string, std::int32_t> user_index_, item_index_;
  std::optional<Tensor<double>> item_features_;
  std::size_t duplicates_dropped_ = 0;
  bool finalized_ = false;
};

struct LogFormat {
  char delimiter = '\t';
  /// Optional sidecar with per-item features: item_id followed by the same
  /// number of numeric columns on every line.
  std::string features_path;
};

namespace detail {

inline std::vector<std::string_view> splitLine(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::int64_t parseInt64(std::string_view s, const std::string& what, std::size_t line_no) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + what + " '" +
                             std::string(s) + "'");
  }
  return v;
}

inline double parseDouble(std::string_view s, const std::string& what, std::size_t line_no) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(std::string(s), &consumed);
    if (consumed != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + what + " '" +
                             std::string(s) + "'");
  }
}

}  // namespace detail

/// Loads a delimited click log: one `user_id <delim> item_id <delim> timestamp`
/// record per line. Malformed lines raise an error naming the line number.
inline InteractionLog loadInteractions(const std::string& path, const LogFormat& format = {}) {
  if (std::filesystem::is_directory(path)) {
    throw std::runtime_error("interaction log '" + path +
                             "' is a directory, expected a delimited file");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction log '" + path + "'");

  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cols = detail::splitLine(line, format.delimiter);
    if (cols.size() != 3) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 3 columns, got " +
                               std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": empty user or item id");
    }
    const std::int64_t ts = detail::parseInt64(cols[2], "timestamp", line_no);
    if (ts < 0) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": negative timestamp");
    }
    log.addRecord(std::string(cols[0]), std::string(cols[1]), ts);
  }
  log.finalize();

  if (!format.features_path.empty()) {
    std::ifstream fin(format.features_path);
    if (!fin) throw std::runtime_error("cannot open feature file '" + format.features_path + "'");
    std::size_t fdim = 0;
    std::vector<std::pair<std::int32_t, std::vector<double>>> rows;
    std::size_t fline = 0;
    while (std::getline(fin, line)) {
      ++fline;
      if (line.empty()) continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto cols = detail::splitLine(line, format.delimiter);
      if (cols.size() < 2) {
        throw std::runtime_error("line " + std::to_string(fline) + ": feature row needs id + values");
      }
      if (fdim == 0) {
        fdim = cols.size() - 1;
      } else if (cols.size() - 1 != fdim) {
        throw std::runtime_error("line " + std::to_string(fline) + ": expected " +
                                 std::to_string(fdim) + " feature values, got " +
                                 std::to_string(cols.size() - 1));
      }
      const auto idx = log.findItem(std::string(cols[0]));
      if (!idx) continue;  // features for items never clicked are irrelevant
      std::vector<double> vals(fdim);
      for (std::size_t j = 0; j < fdim; ++j) {
        vals[j] = detail::parseDouble(cols[j + 1], "feature value", fline);
      }
      rows.emplace_back(*idx, std::move(vals));
    }
    if (fdim == 0) throw std::runtime_error("feature file '" + format.features_path + "' is empty");
    Tensor<double> feats({log.nItems(), fdim});
    for (const auto& [idx, vals] : rows) {
      std::copy(vals.begin(), vals.end(), feats.row(static_cast<std::size_t>(idx)));
    }
    log.attachItemFeatures(std::move(feats));
  }
  return log;
}

}  // namespace stagerec
