// Command-line front end: data generation, training, evaluation, ablation
// sweeps, hyperparameter sweeps, and report aggregation.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagerec/data/interactions.hpp"
#include "stagerec/data/split.hpp"
#include "stagerec/data/stages.hpp"
#include "stagerec/data/synth.hpp"
#include "stagerec/eval/freshness.hpp"
#include "stagerec/eval/metrics.hpp"
#include "stagerec/eval/report.hpp"
#include "stagerec/model/infer.hpp"
#include "stagerec/objective/losses.hpp"
#include "stagerec/training/checkpoint.hpp"
#include "stagerec/training/config.hpp"
#include "stagerec/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- utilities

json readJsonFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + " is not valid JSON: " + e.what());
  }
  return j;
}

void writeTextFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Parses a duration token: plain seconds or a number suffixed with
/// s/h/d/w (seconds, hours, days, weeks).
std::int64_t parseDuration(const std::string& token) {
  if (token.empty()) throw std::runtime_error("empty duration");
  std::int64_t mult = 1;
  std::string digits = token;
  switch (token.back()) {
    case 'w': mult = 604800; digits.pop_back(); break;
    case 'd': mult = 86400; digits.pop_back(); break;
    case 'h': mult = 3600; digits.pop_back(); break;
    case 's': mult = 1; digits.pop_back(); break;
    default: break;
  }
  if (digits.empty()) throw std::runtime_error("bad duration '" + token + "'");
  std::size_t pos = 0;
  std::int64_t value = 0;
  try {
    value = std::stoll(digits, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("bad duration '" + token + "'");
  }
  if (pos != digits.size() || value <= 0) throw std::runtime_error("bad duration '" + token + "'");
  return value * mult;
}

std::vector<std::string> splitCsvList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

/// Row splitter that keeps empty cells (metrics rows have optional columns).
std::vector<std::string> splitCsvRow(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

std::string readGitRevision() {
  std::error_code ec;
  std::ifstream head(".git/HEAD");
  if (!head) return "unknown";
  std::string line;
  std::getline(head, line);
  if (line.rfind("ref: ", 0) == 0) {
    std::ifstream ref(".git/" + line.substr(5));
    if (ref) {
      std::string hash;
      std::getline(ref, hash);
      if (!hash.empty()) return hash;
    }
    return line.substr(5);
  }
  return line.empty() ? "unknown" : line;
}

double nowSeconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void ensureOutDir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out + ": " + ec.message());
}

// ------------------------------------------------------------- synth config

stagerec::SynthConfig synthConfigFromJson(const json& j) {
  stagerec::SynthConfig c;
  if (!j.is_object()) throw std::runtime_error("synth config: expected a JSON object");
  static const std::vector<std::string> known{
      "n_users", "n_items", "n_topics", "n_stages", "clicks_per_stage", "drift_prob",
      "noise_prob", "late_publish_frac", "recency_boost", "stage_seconds", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::runtime_error("synth config: unknown key \"" + key + "\"");
    }
    (void)value;
  }
  c.n_users = j.value("n_users", c.n_users);
  c.n_items = j.value("n_items", c.n_items);
  c.n_topics = j.value("n_topics", c.n_topics);
  c.n_stages = j.value("n_stages", c.n_stages);
  c.clicks_per_stage = j.value("clicks_per_stage", c.clicks_per_stage);
  c.drift_prob = j.value("drift_prob", c.drift_prob);
  c.noise_prob = j.value("noise_prob", c.noise_prob);
  c.late_publish_frac = j.value("late_publish_frac", c.late_publish_frac);
  c.recency_boost = j.value("recency_boost", c.recency_boost);
  c.stage_seconds = j.value("stage_seconds", c.stage_seconds);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json synthConfigToJson(const stagerec::SynthConfig& c) {
  return json{{"n_users", c.n_users},
              {"n_items", c.n_items},
              {"n_topics", c.n_topics},
              {"n_stages", c.n_stages},
              {"clicks_per_stage", c.clicks_per_stage},
              {"drift_prob", c.drift_prob},
              {"noise_prob", c.noise_prob},
              {"late_publish_frac", c.late_publish_frac},
              {"recency_boost", c.recency_boost},
              {"stage_seconds", c.stage_seconds},
              {"seed", c.seed}};
}

// --------------------------------------------------------------- data model

struct LoadedData {
  stagerec::InteractionLog log;
  stagerec::StagePartition part;
  stagerec::DatasetSplit split;
};

LoadedData loadDataset(const std::string& data_path, const std::string& features_path,
                       std::int64_t window_seconds, std::size_t n_eval_neg,
                       std::uint64_t seed) {
  stagerec::LogFormat fmt;
  fmt.features_path = features_path;
  stagerec::InteractionLog log = stagerec::loadInteractions(data_path, fmt);
  stagerec::StagePartition part = stagerec::partitionStages(log, window_seconds);
  stagerec::DatasetSplit split = stagerec::chronologicalSplit(part, n_eval_neg, seed);
  return LoadedData{std::move(log), std::move(part), std::move(split)};
}

/// Publication stage per dense item index, resolved from a ground-truth
/// sidecar keyed by item id.
std::vector<std::int32_t> publicationStages(const json& truth, const stagerec::InteractionLog& log) {
  if (!truth.contains("item_publication_stage")) {
    throw std::runtime_error("truth sidecar has no item_publication_stage map");
  }
  const auto& map = truth.at("item_publication_stage");
  std::vector<std::int32_t> out(log.nItems(), 0);
  for (std::size_t i = 0; i < log.nItems(); ++i) {
    const std::string& id = log.itemId(static_cast<std::int32_t>(i));
    if (!map.contains(id)) {
      throw std::runtime_error("truth sidecar has no publication stage for item \"" + id + "\"");
    }
    out[i] = map.at(id).get<std::int32_t>();
  }
  return out;
}

// ------------------------------------------------------------ config loading

stagerec::TrainConfig loadTrainConfig(const std::string& config_path,
                                      const std::optional<std::uint64_t>& seed_flag,
                                      const std::string& ablation_flag, int precision_flag,
                                      const std::string& window_flag) {
  stagerec::TrainConfig cfg;
  if (!config_path.empty()) cfg = stagerec::TrainConfig::fromJson(readJsonFile(config_path));
  if (seed_flag) cfg.seed = *seed_flag;
  if (!ablation_flag.empty()) cfg.ablation = ablation_flag;
  if (precision_flag != 0) cfg.precision = precision_flag;
  if (!window_flag.empty()) cfg.window_seconds = parseDuration(window_flag);
  cfg.validate();
  return cfg;
}

std::string makeRunId(const stagerec::TrainConfig& cfg) {
  return cfg.ablation + "-seed" + std::to_string(cfg.seed);
}

// --------------------------------------------------------------- train/eval

template <class Real>
std::optional<stagerec::Tensor<Real>> castFeatures(const stagerec::InteractionLog& log,
                                                   const stagerec::TrainConfig& cfg) {
  if (cfg.feature_dim == 0) return std::nullopt;
  if (!log.itemFeatures().has_value()) {
    throw std::runtime_error("config declares feature_dim " + std::to_string(cfg.feature_dim) +
                             " but the dataset has no feature sidecar (--features)");
  }
  const auto& src = *log.itemFeatures();
  stagerec::Tensor<Real> out(src.shape());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<Real>(src[i]);
  return out;
}

/// Default freshness windows: the newest quarter of stages counts as "new",
/// the oldest quarter as "historical" (at least one stage each).
stagerec::FreshnessWindows defaultWindows(std::int32_t n_stages) {
  const std::int32_t quarter = std::max<std::int32_t>(1, (n_stages + 3) / 4);
  stagerec::FreshnessWindows w;
  w.new_from_stage = n_stages - quarter;
  w.historical_until_stage = quarter - 1;
  return w;
}

template <class Real>
stagerec::MetricsReport evaluateCheckpoint(const stagerec::Checkpoint<Real>& ckpt,
                                           const LoadedData& data,
                                           const json* truth) {
  const auto& cfg = ckpt.config;
  const auto wiring = stagerec::ModelWiring::fromAblation(cfg.ablationFlag());
  const auto hyper = cfg.hyper();
  const auto features = castFeatures<Real>(data.log, cfg);
  const auto graphs = stagerec::buildGraphSet(data.part, data.split.train_stages);
  const auto tables = stagerec::buildEvalTables(ckpt.params, wiring, hyper, graphs,
                                                features ? &*features : nullptr);
  const std::int32_t val_stage = data.split.train_stages.back();

  // Validation is scored exactly as during training (history = train stages).
  // Test-time inference conditions on everything observed before the test
  // stage, so the local chain legitimately extends through the validation
  // stage; the global encoder keeps its trained state (it refreshes at
  // training cadence, which is the condition the local module exists to
  // bridge). Parameters stay frozen and nothing from the test stage itself
  // enters any representation.
  std::vector<std::int32_t> test_history = data.split.train_stages;
  test_history.push_back(data.split.val_stage);
  const auto test_graphs =
      stagerec::buildGraphSet(data.part, data.split.train_stages, test_history);
  const auto test_tables = stagerec::buildEvalTables(ckpt.params, wiring, hyper, test_graphs,
                                                     features ? &*features : nullptr);
  const std::int32_t test_stage = data.split.val_stage;

  stagerec::MetricsReport report;
  report.run_id = makeRunId(cfg);
  report.config_hash = cfg.hashHex();
  report.variant = cfg.ablation;
  report.seed = cfg.seed;
  report.best_epoch = ckpt.best_epoch;
  report.best_val_auc = ckpt.best_val_auc;
  report.val = stagerec::evaluateRanking(stagerec::scoreImpressions(
      tables, ckpt.params, wiring, hyper, data.part, data.split.val_impressions, val_stage));
  report.test = stagerec::evaluateRanking(stagerec::scoreImpressions(
      test_tables, ckpt.params, wiring, hyper, data.part, data.split.test_impressions,
      test_stage));
  if (wiring.local && tables.user_evolved.size() > 1) {
    // Smoothness of the trained chain only: this is the statistic lambda_sl
    // regularizes, so it is reported over the train-stage tables.
    report.adjacent_stage_distance =
        static_cast<double>(stagerec::smoothnessLoss(tables.user_evolved));
  }

  if (truth != nullptr) {
    const auto pub = publicationStages(*truth, data.log);
    const auto fused_items = stagerec::fusedItemMatrix(test_tables, wiring, test_stage);
    std::vector<stagerec::TopList> lists;
    std::vector<std::size_t> click_counts(static_cast<std::size_t>(data.part.nUsers()), 0);
    for (std::int32_t u = 0; u < data.part.nUsers(); ++u) {
      click_counts[static_cast<std::size_t>(u)] =
          static_cast<std::size_t>(data.part.cumulativeClicks(u, test_stage));
      const auto user_vec = stagerec::fusedUserVector(test_tables, ckpt.params, wiring, data.part,
                                                      u, test_stage, hyper);
      auto items = stagerec::topKForUser(user_vec, fused_items, data.part, u, test_stage, 10);
      if (!items.empty()) lists.push_back(stagerec::TopList{u, std::move(items)});
    }
    report.freshness = stagerec::freshnessByGroup(lists, pub, click_counts,
                                                  defaultWindows(data.part.nStages()));
  }
  return report;
}

void writeReportFiles(const std::string& out, const stagerec::MetricsReport& report) {
  writeTextFile(out + "/metrics.json", stagerec::reportToJson(report).dump(2) + "\n");
  writeTextFile(out + "/metrics.csv",
                stagerec::reportCsvHeader() + "\n" + stagerec::reportCsvRow(report) + "\n");
}

template <class Real>
stagerec::MetricsReport trainAndEvaluate(const stagerec::TrainConfig& cfg, const LoadedData& data,
                                         const json* truth, const std::string& checkpoint_path,
                                         const std::string& epochs_path) {
  const auto features = castFeatures<Real>(data.log, cfg);
  const auto result =
      stagerec::runTraining<Real>(cfg, data.part, data.split, features ? &*features : nullptr);

  if (!checkpoint_path.empty()) stagerec::saveCheckpoint(checkpoint_path, result.best);
  if (!epochs_path.empty()) {
    std::string csv = "epoch,train_loss,val_auc,n_batches\n";
    for (const auto& e : result.epochs) {
      csv += std::to_string(e.epoch) + "," + stagerec::detail::fmtDouble(e.train_loss) + "," +
             stagerec::detail::fmtDouble(e.val_auc) + "," + std::to_string(e.n_batches) + "\n";
    }
    writeTextFile(epochs_path, csv);
  }
  return evaluateCheckpoint(result.best, data, truth);
}

stagerec::MetricsReport trainAndEvaluateDispatch(const stagerec::TrainConfig& cfg,
                                                 const LoadedData& data, const json* truth,
                                                 const std::string& checkpoint_path,
                                                 const std::string& epochs_path) {
  if (cfg.precision == 64) {
    return trainAndEvaluate<double>(cfg, data, truth, checkpoint_path, epochs_path);
  }
  return trainAndEvaluate<float>(cfg, data, truth, checkpoint_path, epochs_path);
}

// ----------------------------------------------------------------- commands

int cmdGenData(const std::string& config_path, const std::optional<std::uint64_t>& seed_flag,
               const std::string& out) {
  stagerec::SynthConfig cfg;
  if (!config_path.empty()) cfg = synthConfigFromJson(readJsonFile(config_path));
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.validate();
  ensureOutDir(out);

  const auto res = stagerec::synthGenerate(cfg);

  std::string tsv;
  tsv.reserve(res.log.records().size() * 24);
  for (const auto& r : res.log.records()) {
    tsv += res.log.userId(r.user) + "\t" + res.log.itemId(r.item) + "\t" +
           std::to_string(r.ts) + "\n";
  }
  writeTextFile(out + "/interactions.tsv", tsv);

  json pub = json::object(), topic = json::object(), user_topics = json::object();
  for (std::int32_t i = 0; i < cfg.n_items; ++i) {
    pub[res.log.itemId(i)] = res.truth.item_publication_stage[static_cast<std::size_t>(i)];
    topic[res.log.itemId(i)] = res.truth.item_topic[static_cast<std::size_t>(i)];
  }
  for (std::int32_t u = 0; u < cfg.n_users; ++u) {
    user_topics[res.log.userId(u)] = res.truth.user_topics[static_cast<std::size_t>(u)];
  }
  const json truth{{"n_stages", res.truth.n_stages},
                   {"item_publication_stage", pub},
                   {"item_topic", topic},
                   {"user_topics", user_topics}};
  writeTextFile(out + "/truth.json", truth.dump(2) + "\n");

  const json manifest{{"command", "gen-data"},
                      {"config", synthConfigToJson(cfg)},
                      {"seed", cfg.seed},
                      {"out", out},
                      {"source_revision", readGitRevision()},
                      {"outputs", {"interactions.tsv", "truth.json"}}};
  writeTextFile(out + "/manifest.json", manifest.dump(2) + "\n");

  std::cout << "wrote " << res.log.records().size() << " interactions for " << cfg.n_users
            << " users / " << cfg.n_items << " items to " << out << "\n";
  return 0;
}

int cmdTrain(const stagerec::TrainConfig& cfg, const std::string& config_path,
             const std::string& data_path, const std::string& features_path,
             const std::string& truth_path, const std::string& out) {
  ensureOutDir(out);
  const std::string run_id = makeRunId(cfg);

  // The manifest goes down before training so a crashed run is still
  // reconstructible.
  json manifest{{"command", "train"},
                {"run_id", run_id},
                {"config", cfg.toJson()},
                {"config_path", config_path},
                {"config_hash", cfg.hashHex()},
                {"data", data_path},
                {"features", features_path},
                {"truth", truth_path},
                {"seed", cfg.seed},
                {"out", out},
                {"source_revision", readGitRevision()},
                {"timings", json::object()}};
  writeTextFile(out + "/manifest.json", manifest.dump(2) + "\n");

  const double t0 = nowSeconds();
  const LoadedData data = loadDataset(data_path, features_path, cfg.window_seconds,
                                      static_cast<std::size_t>(cfg.n_eval_neg), cfg.seed);
  const double t1 = nowSeconds();

  std::optional<json> truth;
  if (!truth_path.empty()) truth = readJsonFile(truth_path);

  const auto report = trainAndEvaluateDispatch(cfg, data, truth ? &*truth : nullptr,
                                               out + "/checkpoint.json", out + "/epochs.csv");
  const double t2 = nowSeconds();
  writeReportFiles(out, report);

  manifest["timings"] = json{{"load_seconds", t1 - t0}, {"train_eval_seconds", t2 - t1}};
  writeTextFile(out + "/manifest.json", manifest.dump(2) + "\n");

  std::cout << "run " << run_id << ": best epoch " << report.best_epoch << ", val AUC "
            << report.best_val_auc << ", test AUC " << report.test.auc << "\n";
  return 0;
}

int cmdEval(const std::string& checkpoint_path, const std::string& data_path,
            const std::string& features_path, const std::string& truth_path,
            const std::string& out) {
  ensureOutDir(out);
  const auto cfg = stagerec::peekCheckpointConfig(checkpoint_path);
  const LoadedData data = loadDataset(data_path, features_path, cfg.window_seconds,
                                      static_cast<std::size_t>(cfg.n_eval_neg), cfg.seed);
  std::optional<json> truth;
  if (!truth_path.empty()) truth = readJsonFile(truth_path);

  stagerec::MetricsReport report;
  if (cfg.precision == 64) {
    const auto ckpt = stagerec::loadCheckpoint<double>(checkpoint_path);
    report = evaluateCheckpoint(ckpt, data, truth ? &*truth : nullptr);
  } else {
    const auto ckpt = stagerec::loadCheckpoint<float>(checkpoint_path);
    report = evaluateCheckpoint(ckpt, data, truth ? &*truth : nullptr);
  }
  writeReportFiles(out, report);
  std::cout << "run " << report.run_id << ": test AUC " << report.test.auc << ", MRR "
            << report.test.mrr << ", nDCG@10 " << report.test.ndcg10 << "\n";
  return 0;
}

int cmdAblate(stagerec::TrainConfig cfg, const std::string& data_path,
              const std::string& features_path, const std::string& truth_path,
              const std::string& out) {
  ensureOutDir(out);
  const LoadedData data = loadDataset(data_path, features_path, cfg.window_seconds,
                                      static_cast<std::size_t>(cfg.n_eval_neg), cfg.seed);
  std::optional<json> truth;
  if (!truth_path.empty()) truth = readJsonFile(truth_path);

  std::string csv = stagerec::reportCsvHeader() + "\n";
  for (const std::string variant : {"full", "no_lpm", "no_ste", "no_lra", "no_gpm"}) {
    cfg.ablation = variant;
    cfg.validate();
    const auto report = trainAndEvaluateDispatch(cfg, data, truth ? &*truth : nullptr, "", "");
    csv += stagerec::reportCsvRow(report) + "\n";
    std::cout << variant << ": test AUC " << report.test.auc << "\n";
  }
  writeTextFile(out + "/ablation.csv", csv);
  return 0;
}

int cmdSweep(stagerec::TrainConfig base, const std::string& data_path,
             const std::string& features_path, const std::string& window_list,
             const std::string& lambda_t_list, const std::string& lambda_cl_list,
             const std::string& lambda_sl_list, const std::string& out) {
  ensureOutDir(out);
  std::string csv = "axis,value,test_auc,test_mrr,test_ndcg5,test_ndcg10,val_auc\n";
  std::size_t rows = 0;

  auto appendRow = [&](const std::string& axis, const std::string& value,
                       const stagerec::TrainConfig& cfg, const LoadedData& data) {
    const auto report = trainAndEvaluateDispatch(cfg, data, nullptr, "", "");
    csv += axis + "," + value + "," + stagerec::detail::fmtDouble(report.test.auc) + "," +
           stagerec::detail::fmtDouble(report.test.mrr) + "," +
           stagerec::detail::fmtDouble(report.test.ndcg5) + "," +
           stagerec::detail::fmtDouble(report.test.ndcg10) + "," +
           stagerec::detail::fmtDouble(report.val.auc) + "\n";
    ++rows;
    std::cout << axis << "=" << value << ": test AUC " << report.test.auc << "\n";
  };

  for (const auto& tok : splitCsvList(window_list)) {
    stagerec::TrainConfig cfg = base;
    cfg.window_seconds = parseDuration(tok);
    cfg.validate();
    const LoadedData data = loadDataset(data_path, features_path, cfg.window_seconds,
                                        static_cast<std::size_t>(cfg.n_eval_neg), cfg.seed);
    appendRow("window", tok, cfg, data);
  }

  std::optional<LoadedData> base_data;
  auto baseData = [&]() -> const LoadedData& {
    if (!base_data) {
      base_data = loadDataset(data_path, features_path, base.window_seconds,
                              static_cast<std::size_t>(base.n_eval_neg), base.seed);
    }
    return *base_data;
  };
  auto sweepLambda = [&](const std::string& axis, const std::string& list, auto setter) {
    for (const auto& tok : splitCsvList(list)) {
      stagerec::TrainConfig cfg = base;
      setter(cfg, std::stod(tok));
      cfg.validate();
      appendRow(axis, tok, cfg, baseData());
    }
  };
  sweepLambda("lambda_t", lambda_t_list,
              [](stagerec::TrainConfig& c, double v) { c.lambda_t = v; });
  sweepLambda("lambda_cl", lambda_cl_list,
              [](stagerec::TrainConfig& c, double v) { c.lambda_cl = v; });
  sweepLambda("lambda_sl", lambda_sl_list,
              [](stagerec::TrainConfig& c, double v) { c.lambda_sl = v; });

  if (rows == 0) {
    throw std::runtime_error(
        "sweep: no axis given (use --window and/or --lambda-t/--lambda-cl/--lambda-sl)");
  }
  writeTextFile(out + "/sweep.csv", csv);
  return 0;
}

int cmdReport(const std::vector<std::string>& inputs, const std::string& out) {
  if (inputs.empty()) throw std::runtime_error("report: no input CSV files given");
  ensureOutDir(out);

  // Aggregate rows with the metrics.csv column layout, grouped by variant.
  struct Acc {
    std::size_t n = 0;
    double auc = 0, mrr = 0, ndcg5 = 0, ndcg10 = 0;
  };
  std::map<std::string, Acc> groups;
  const std::string expected_header = stagerec::reportCsvHeader();

  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + " is empty");
    if (line != expected_header) {
      throw std::runtime_error(path + " does not have the metrics.csv column layout");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cols = splitCsvRow(line);
      if (cols.size() < 9) throw std::runtime_error(path + ": short row: " + line);
      Acc& acc = groups[cols[2]];  // variant column
      ++acc.n;
      acc.auc += std::stod(cols[4]);
      acc.mrr += std::stod(cols[5]);
      acc.ndcg5 += std::stod(cols[6]);
      acc.ndcg10 += std::stod(cols[7]);
    }
  }

  std::string csv = "variant,n_runs,test_auc_mean,test_mrr_mean,test_ndcg5_mean,test_ndcg10_mean\n";
  std::cout << "variant          n   AUC      MRR      nDCG@5   nDCG@10\n";
  for (const auto& [variant, acc] : groups) {
    const double n = static_cast<double>(acc.n);
    csv += variant + "," + std::to_string(acc.n) + "," +
           stagerec::detail::fmtDouble(acc.auc / n) + "," + stagerec::detail::fmtDouble(acc.mrr / n) +
           "," + stagerec::detail::fmtDouble(acc.ndcg5 / n) + "," +
           stagerec::detail::fmtDouble(acc.ndcg10 / n) + "\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-16s %-3zu %-8.4f %-8.4f %-8.4f %-8.4f\n", variant.c_str(),
                  acc.n, acc.auc / n, acc.mrr / n, acc.ndcg5 / n, acc.ndcg10 / n);
    std::cout << buf;
  }
  writeTextFile(out + "/summary.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stage-wise evolving-interest news recommender"};
  app.require_subcommand(1);

  std::string config_path, data_path, features_path, truth_path, out_dir, checkpoint_path;
  std::string ablation_flag, window_flag;
  std::string window_list, lambda_t_list, lambda_cl_list, lambda_sl_list;
  std::vector<std::string> report_inputs;
  std::optional<std::uint64_t> seed_flag;
  std::uint64_t seed_value = 0;
  int precision_flag = 0;

  auto addSeed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_value, "root seed (overrides config)")
        ->each([&](const std::string&) { seed_flag = seed_value; });
  };
  auto addCommon = [&](CLI::App* cmd, bool with_model_flags) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory")->required();
    addSeed(cmd);
    if (with_model_flags) {
      cmd->add_option("--data", data_path, "interactions TSV")->required();
      cmd->add_option("--features", features_path, "item feature TSV");
      cmd->add_option("--ablation", ablation_flag,
                      "model variant: full|no_lpm|no_ste|no_lra|no_gpm");
      cmd->add_option("--precision", precision_flag, "32 or 64");
      cmd->add_option("--window", window_flag, "stage window, e.g. 1w, 3d, 604800s");
    }
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic drifting-interest click log");
  addCommon(gen, false);

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  addCommon(train, true);
  train->add_option("--truth", truth_path, "ground-truth sidecar JSON (enables freshness stats)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval->add_option("--data", data_path, "interactions TSV")->required();
  eval->add_option("--features", features_path, "item feature TSV");
  eval->add_option("--truth", truth_path, "ground-truth sidecar JSON");
  eval->add_option("--out", out_dir, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "train the full model and all ablation variants");
  addCommon(ablate, true);
  ablate->add_option("--truth", truth_path, "ground-truth sidecar JSON");

  auto* sweep = app.add_subcommand("sweep", "sweep window sizes or loss weights");
  addCommon(sweep, true);
  sweep->add_option("--window-list", window_list, "comma list of windows, e.g. 1w,2w,3w,4w");
  sweep->add_option("--lambda-t", lambda_t_list, "comma list of lambda_t values");
  sweep->add_option("--lambda-cl", lambda_cl_list, "comma list of lambda_cl values");
  sweep->add_option("--lambda-sl", lambda_sl_list, "comma list of lambda_sl values");

  auto* report = app.add_subcommand("report", "aggregate metrics CSVs into a summary table");
  report->add_option("--inputs", report_inputs, "metrics/ablation CSV files")->required();
  report->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmdGenData(config_path, seed_flag, out_dir);
    if (*train) {
      const auto cfg =
          loadTrainConfig(config_path, seed_flag, ablation_flag, precision_flag, window_flag);
      return cmdTrain(cfg, config_path, data_path, features_path, truth_path, out_dir);
    }
    if (*eval) return cmdEval(checkpoint_path, data_path, features_path, truth_path, out_dir);
    if (*ablate) {
      const auto cfg =
          loadTrainConfig(config_path, seed_flag, ablation_flag, precision_flag, window_flag);
      return cmdAblate(cfg, data_path, features_path, truth_path, out_dir);
    }
    if (*sweep) {
      const auto cfg =
          loadTrainConfig(config_path, seed_flag, ablation_flag, precision_flag, window_flag);
      return cmdSweep(cfg, data_path, features_path, window_list, lambda_t_list, lambda_cl_list,
                      lambda_sl_list, out_dir);
    }
    if (*report) return cmdReport(report_inputs, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
