#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagerec/core/tensor.hpp"
#include "stagerec/model/params.hpp"
#include "stagerec/training/config.hpp"

namespace stagerec {

inline constexpr const char* kCheckpointFormat = "stagerec-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a trained model: the config that produced it,
/// the dataset dimensions the tensors were sized for, and the tensors.
template <class Real>
struct Checkpoint {
  TrainConfig config;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  int best_epoch = -1;       // -1 = untrained
  double best_val_auc = 0;
  ModelParams<Real> params;
};

template <class Real>
nlohmann::json checkpointToJson(const Checkpoint<Real>& ckpt) {
  nlohmann::json tensors = nlohmann::json::object();
  ckpt.params.forEachTensor([&](const std::string& name, const Tensor<Real>& t) {
    nlohmann::json shape = nlohmann::json::array();
    for (auto s : t.shape()) shape.push_back(s);
    nlohmann::json values = nlohmann::json::array();
    for (Real v : t.values()) values.push_back(static_cast<double>(v));
    tensors[name] = nlohmann::json{{"shape", shape}, {"values", values}};
  });
  return nlohmann::json{{"format", kCheckpointFormat},
                        {"version", kCheckpointVersion},
                        {"config", ckpt.config.toJson()},
                        {"n_users", ckpt.n_users},
                        {"n_items", ckpt.n_items},
                        {"best_epoch", ckpt.best_epoch},
                        {"best_val_auc", ckpt.best_val_auc},
                        {"tensors", tensors}};
}

template <class Real>
Checkpoint<Real> checkpointFromJson(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != kCheckpointFormat) {
    throw std::invalid_argument("checkpoint: not a " + std::string(kCheckpointFormat) + " file");
  }
  const int version = j.value("version", 0);
  if (version != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint<Real> ckpt;
  ckpt.config = TrainConfig::fromJson(j.at("config"));
  ckpt.n_users = j.at("n_users").get<std::size_t>();
  ckpt.n_items = j.at("n_items").get<std::size_t>();
  ckpt.best_epoch = j.value("best_epoch", -1);
  ckpt.best_val_auc = j.value("best_val_auc", 0.0);

  // Build the skeleton the config implies, then fill each tensor by name.
  const auto wiring = ModelWiring::fromAblation(ckpt.config.ablationFlag());
  ckpt.params = initModelParams<Real>(wiring, ckpt.config.hyper(), ckpt.n_users, ckpt.n_items,
                                      static_cast<std::size_t>(ckpt.config.feature_dim),
                                      ckpt.config.seed);

  const auto& tensors = j.at("tensors");
  std::size_t consumed = 0;
  ckpt.params.forEachTensor([&](const std::string& name, Tensor<Real>& t) {
    if (!tensors.contains(name)) {
      throw std::invalid_argument("checkpoint: missing tensor \"" + name + "\"");
    }
    const auto& entry = tensors.at(name);
    std::vector<std::size_t> shape;
    for (const auto& s : entry.at("shape")) shape.push_back(s.get<std::size_t>());
    if (shape != t.shape()) {
      throw std::invalid_argument("checkpoint: tensor \"" + name +
                                  "\" shape does not match the config's dimensions");
    }
    const auto& values = entry.at("values");
    if (values.size() != t.size()) {
      throw std::invalid_argument("checkpoint: tensor \"" + name + "\" has " +
                                  std::to_string(values.size()) + " values, expected " +
                                  std::to_string(t.size()));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.values()[i] = static_cast<Real>(values[i].get<double>());
    }
    ++consumed;
  });
  if (consumed != tensors.size()) {
    throw std::invalid_argument("checkpoint: file holds " + std::to_string(tensors.size()) +
                                " tensors but the config implies " + std::to_string(consumed));
  }
  return ckpt;
}

template <class Real>
void saveCheckpoint(const std::string& path, const Checkpoint<Real>& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << checkpointToJson(ckpt).dump();
  out.flush();
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <class Real>
Checkpoint<Real> loadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: " + path + " is not valid JSON: " + e.what());
  }
  return checkpointFromJson<Real>(j);
}

/// Reads only the config block, so callers can pick the precision before
/// instantiating the typed checkpoint.
inline TrainConfig peekCheckpointConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("config")) {
    throw std::runtime_error("checkpoint: " + path + " has no config block");
  }
  return TrainConfig::fromJson(j.at("config"));
}

}  // namespace stagerec
