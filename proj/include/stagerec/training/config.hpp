#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stagerec/core/rng.hpp"
#include "stagerec/model/params.hpp"
#include "stagerec/objective/losses.hpp"

namespace stagerec {

/// Full training recipe. Defaults follow the reference protocol
/// (d = 64, lr = 5e-6, batch 1024, dropout 0.2, 4 negatives, tau = 0.1,
/// lambda_t = 0.1, lambda_cl = lambda_sl = 0.01).
struct TrainConfig {
  // Model dimensions.
  int d = 64;
  int layers_global = 2;
  int layers_stage = 2;
  int layers_attention = 2;
  int m_max = 50;
  int feature_dim = 0;  // 0 = free item embeddings, >0 = projected content features

  // Optimization.
  double learning_rate = 5e-6;
  int batch_size = 1024;
  int max_epochs = 50;
  int patience = 5;
  double weight_decay = 0.0;
  double dropout = 0.2;
  int n_neg = 4;

  // Objective weights.
  double tau = 0.1;
  double lambda_t = 0.1;
  double lambda_cl = 0.01;
  double lambda_sl = 0.01;

  // Data protocol.
  std::int64_t window_seconds = 604800;  // one week
  int n_eval_neg = 4;                    // candidates per held-out click (train/val symmetry)

  // Run identity.
  std::uint64_t seed = 1;
  int precision = 32;  // 32 or 64
  std::string ablation = "full";

  void validate() const {
    if (d <= 0) throw std::invalid_argument("config: d must be positive");
    if (layers_global < 0 || layers_stage < 0 || layers_attention < 0) {
      throw std::invalid_argument("config: layer counts must be non-negative");
    }
    if (m_max <= 0) throw std::invalid_argument("config: m_max must be positive");
    if (feature_dim < 0) throw std::invalid_argument("config: feature_dim must be non-negative");
    if (learning_rate < 0) throw std::invalid_argument("config: learning_rate must be non-negative");
    if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be positive");
    if (max_epochs <= 0) throw std::invalid_argument("config: max_epochs must be positive");
    if (patience <= 0) throw std::invalid_argument("config: patience must be positive");
    if (weight_decay < 0) throw std::invalid_argument("config: weight_decay must be non-negative");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("config: dropout must be in [0,1)");
    if (n_neg <= 0) throw std::invalid_argument("config: n_neg must be positive");
    if (tau <= 0) throw std::invalid_argument("config: tau must be positive");
    if (lambda_t < 0 || lambda_cl < 0 || lambda_sl < 0) {
      throw std::invalid_argument("config: loss weights must be non-negative");
    }
    if (window_seconds <= 0) throw std::invalid_argument("config: window_seconds must be positive");
    if (n_eval_neg <= 0) throw std::invalid_argument("config: n_eval_neg must be positive");
    if (precision != 32 && precision != 64) {
      throw std::invalid_argument("config: precision must be 32 or 64");
    }
    parseAblation(ablation);  // throws on unknown flag
  }

  Ablation ablationFlag() const { return parseAblation(ablation); }

  ModelHyper hyper() const {
    ModelHyper h;
    h.d = d;
    h.layers_global = layers_global;
    h.layers_stage = layers_stage;
    h.layers_attention = layers_attention;
    h.m_max = m_max;
    return h;
  }

  template <typename Real>
  LossWeights<Real> lossWeights() const {
    LossWeights<Real> w;
    w.lambda_t = static_cast<Real>(lambda_t);
    w.lambda_cl = static_cast<Real>(lambda_cl);
    w.lambda_sl = static_cast<Real>(lambda_sl);
    w.beta = static_cast<Real>(weight_decay);
    w.tau = static_cast<Real>(tau);
    return w;
  }

  nlohmann::json toJson() const {
    return nlohmann::json{{"d", d},
                          {"layers_global", layers_global},
                          {"layers_stage", layers_stage},
                          {"layers_attention", layers_attention},
                          {"m_max", m_max},
                          {"feature_dim", feature_dim},
                          {"learning_rate", learning_rate},
                          {"batch_size", batch_size},
                          {"max_epochs", max_epochs},
                          {"patience", patience},
                          {"weight_decay", weight_decay},
                          {"dropout", dropout},
                          {"n_neg", n_neg},
                          {"tau", tau},
                          {"lambda_t", lambda_t},
                          {"lambda_cl", lambda_cl},
                          {"lambda_sl", lambda_sl},
                          {"window_seconds", window_seconds},
                          {"n_eval_neg", n_eval_neg},
                          {"seed", seed},
                          {"precision", precision},
                          {"ablation", ablation}};
  }

  /// Parses a config object. Unknown keys are rejected (typo protection);
  /// missing keys keep their defaults.
  static TrainConfig fromJson(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    TrainConfig c;
    const auto known = c.toJson();
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) {
        throw std::invalid_argument("config: unknown key \"" + key + "\"");
      }
      (void)value;
    }
    c.d = j.value("d", c.d);
    c.layers_global = j.value("layers_global", c.layers_global);
    c.layers_stage = j.value("layers_stage", c.layers_stage);
    c.layers_attention = j.value("layers_attention", c.layers_attention);
    c.m_max = j.value("m_max", c.m_max);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.dropout = j.value("dropout", c.dropout);
    c.n_neg = j.value("n_neg", c.n_neg);
    c.tau = j.value("tau", c.tau);
    c.lambda_t = j.value("lambda_t", c.lambda_t);
    c.lambda_cl = j.value("lambda_cl", c.lambda_cl);
    c.lambda_sl = j.value("lambda_sl", c.lambda_sl);
    c.window_seconds = j.value("window_seconds", c.window_seconds);
    c.n_eval_neg = j.value("n_eval_neg", c.n_eval_neg);
    c.seed = j.value("seed", c.seed);
    c.precision = j.value("precision", c.precision);
    c.ablation = j.value("ablation", c.ablation);
    c.validate();
    return c;
  }

  /// Stable hash of the canonical serialization, for run identification.
  std::string hashHex() const {
    const std::string dump = toJson().dump();
    const std::uint64_t h = fnv1a(dump.c_str());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }
};

}  // namespace stagerec
