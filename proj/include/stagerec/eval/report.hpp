#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagerec/eval/freshness.hpp"
#include "stagerec/eval/metrics.hpp"

namespace stagerec {

/// One run's evaluation results. Deliberately free of wall-clock fields so
/// that identical runs serialize byte-identically (timings live in the run
/// manifest instead).
struct MetricsReport {
  std::string run_id;
  std::string config_hash;
  std::string variant;  // ablation name
  std::uint64_t seed = 0;
  RankingMetrics val;
  RankingMetrics test;
  std::map<std::string, FreshnessStats> freshness;  // empty when no publication stages known
  /// Mean over users of the summed adjacent-stage squared distances of the
  /// evolved embeddings; 0 when the local module is off.
  double adjacent_stage_distance = 0;
  int best_epoch = -1;
  double best_val_auc = 0;

  static const std::vector<std::string>& freshnessGroups() {
    static const std::vector<std::string> groups{"all", "high", "medium", "low"};
    return groups;
  }
};

namespace detail {

inline std::string fmtDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

inline std::string fmtOpt(const std::optional<double>& v) {
  return v.has_value() ? fmtDouble(*v) : std::string{};
}

}  // namespace detail

inline nlohmann::json rankingToJson(const RankingMetrics& m) {
  return nlohmann::json{{"auc", m.auc},
                        {"mrr", m.mrr},
                        {"ndcg5", m.ndcg5},
                        {"ndcg10", m.ndcg10},
                        {"n_impressions", m.n_impressions},
                        {"auc_skipped", m.auc_skipped},
                        {"rank_skipped", m.rank_skipped}};
}

inline nlohmann::json freshnessToJson(const FreshnessStats& f) {
  nlohmann::json j{{"new_pct", f.new_pct},
                   {"historical_pct", f.historical_pct},
                   {"n_lists", f.n_lists}};
  j["nrank"] = f.nrank.has_value() ? nlohmann::json(*f.nrank) : nlohmann::json(nullptr);
  j["orank"] = f.orank.has_value() ? nlohmann::json(*f.orank) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json reportToJson(const MetricsReport& r) {
  nlohmann::json j{{"run_id", r.run_id},
                   {"config_hash", r.config_hash},
                   {"variant", r.variant},
                   {"seed", r.seed},
                   {"val", rankingToJson(r.val)},
                   {"test", rankingToJson(r.test)},
                   {"adjacent_stage_distance", r.adjacent_stage_distance},
                   {"best_epoch", r.best_epoch},
                   {"best_val_auc", r.best_val_auc}};
  nlohmann::json fresh = nlohmann::json::object();
  for (const auto& [group, stats] : r.freshness) fresh[group] = freshnessToJson(stats);
  j["freshness"] = fresh;
  return j;
}

/// Header of the flat CSV row; freshness columns are emitted per user group
/// and left empty when the statistic is absent.
inline std::string reportCsvHeader() {
  std::string h =
      "run_id,config_hash,variant,seed,test_auc,test_mrr,test_ndcg5,test_ndcg10,"
      "val_auc,adjacent_stage_distance,best_epoch";
  for (const auto& g : MetricsReport::freshnessGroups()) {
    h += "," + g + "_new_pct," + g + "_historical_pct," + g + "_nrank," + g + "_orank";
  }
  return h;
}

inline std::string reportCsvRow(const MetricsReport& r) {
  using detail::fmtDouble;
  using detail::fmtOpt;
  std::string row = r.run_id + "," + r.config_hash + "," + r.variant + "," +
                    std::to_string(r.seed) + "," + fmtDouble(r.test.auc) + "," +
                    fmtDouble(r.test.mrr) + "," + fmtDouble(r.test.ndcg5) + "," +
                    fmtDouble(r.test.ndcg10) + "," + fmtDouble(r.val.auc) + "," +
                    fmtDouble(r.adjacent_stage_distance) + "," + std::to_string(r.best_epoch);
  for (const auto& g : MetricsReport::freshnessGroups()) {
    const auto it = r.freshness.find(g);
    if (it == r.freshness.end()) {
      row += ",,,,";
    } else {
      row += "," + fmtDouble(it->second.new_pct) + "," + fmtDouble(it->second.historical_pct) +
             "," + fmtOpt(it->second.nrank) + "," + fmtOpt(it->second.orank);
    }
  }
  return row;
}

}  // namespace stagerec
