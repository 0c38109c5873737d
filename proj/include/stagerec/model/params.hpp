#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tensor.hpp"
#include "stagerec/encoders/embed.hpp"
#include "stagerec/numerics/attention.hpp"
#include "stagerec/numerics/lstm.hpp"

namespace stagerec {

/// Model variants mirroring the ablation table: drop the whole local module,
/// the LSTM evolution, the attention aggregation, or the global module.
enum class Ablation { full, no_lpm, no_ste, no_lra, no_gpm };

inline Ablation parseAblation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_lpm") return Ablation::no_lpm;
  if (s == "no_ste") return Ablation::no_ste;
  if (s == "no_lra") return Ablation::no_lra;
  if (s == "no_gpm") return Ablation::no_gpm;
  throw std::invalid_argument("unknown ablation '" + s +
                              "' (want full|no_lpm|no_ste|no_lra|no_gpm)");
}

inline const char* ablationName(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_lpm: return "no_lpm";
    case Ablation::no_ste: return "no_ste";
    case Ablation::no_lra: return "no_lra";
    case Ablation::no_gpm: return "no_gpm";
  }
  throw std::invalid_argument("unknown ablation value");
}

/// Which branches of the model exist.
struct ModelWiring {
  bool local = true;        // stage encoders + both temporal branches
  bool evolution = true;    // LSTM over stage tables (off: stage tables pass through)
  bool aggregation = true;  // prefix self-attention branch
  bool global_branch = true;  // global propagation output in fusion/seeding/consistency

  static ModelWiring fromAblation(Ablation a) {
    ModelWiring w;
    switch (a) {
      case Ablation::full:
        break;
      case Ablation::no_lpm:
        w.local = false;
        w.evolution = false;
        w.aggregation = false;
        break;
      case Ablation::no_ste:
        w.evolution = false;
        break;
      case Ablation::no_lra:
        w.aggregation = false;
        break;
      case Ablation::no_gpm:
        w.global_branch = false;
        break;
    }
    return w;
  }

  bool hasLstm() const { return local && evolution; }
  bool hasAttention() const { return local && aggregation; }
  /// The consistency loss aligns evolved embeddings to global ones; it only
  /// exists when both modules are wired.
  bool hasConsistency() const { return local && global_branch; }
  bool hasSmoothness() const { return local; }
};

/// Architecture sizes shared by params and forward assembly.
struct ModelHyper {
  std::size_t d = 64;
  std::size_t layers_global = 2;  // propagation depth on the global graph
  std::size_t layers_stage = 2;   // propagation depth on each stage graph
  std::size_t layers_attention = 2;
  std::size_t m_max = 50;  // prefix cap

  void validate() const {
    if (d == 0) throw std::invalid_argument("model: d must be positive");
    if (m_max == 0) throw std::invalid_argument("model: m_max must be positive");
  }
};

/// Every trainable tensor. Branch tensors exist only when the wiring enables
/// them (empty otherwise); item_projection replaces item_emb when fixed item
/// features are supplied.
template <class Real>
struct ModelParams {
  Tensor<Real> user_emb;         // (U x d)
  Tensor<Real> item_emb;         // (I x d), absent when features drive items
  Tensor<Real> item_projection;  // (F x d), absent otherwise
  LstmWeights<Real> user_lstm, item_lstm;
  std::vector<AttentionWeights<Real>> attention;
  Tensor<Real> positional;  // (m_max x d)

  bool hasItemProjection() const { return !item_projection.empty(); }
  bool hasLstm() const { return !user_lstm.b_i.empty(); }
  bool hasAttention() const { return !positional.empty(); }

  /// Visits every present tensor in a fixed order; this order defines the
  /// optimizer slots, the checkpoint layout, and the flattened vector.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("user_emb", self.user_emb);
    if (!self.item_emb.empty()) f("item_emb", self.item_emb);
    if (!self.item_projection.empty()) f("item_projection", self.item_projection);
    if (!self.user_lstm.b_i.empty()) {
      self.user_lstm.forEach([&](const char* n, auto& t) { f(std::string("user_lstm.") + n, t); });
      self.item_lstm.forEach([&](const char* n, auto& t) { f(std::string("item_lstm.") + n, t); });
    }
    if (!self.positional.empty()) {
      for (std::size_t l = 0; l < self.attention.size(); ++l) {
        self.attention[l].forEach([&](const char* n, auto& t) {
          f("attention[" + std::to_string(l) + "]." + n, t);
        });
      }
      f("positional", self.positional);
    }
  }

  template <class F>
  void forEachTensor(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void forEachTensor(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  std::size_t tensorCount() const {
    std::size_t n = 0;
    forEachTensor([&](const std::string&, const Tensor<Real>&) { ++n; });
    return n;
  }

  std::size_t scalarCount() const {
    std::size_t n = 0;
    forEachTensor([&](const std::string&, const Tensor<Real>& t) { n += t.size(); });
    return n;
  }

  Real squaredNorm() const {
    Real acc = 0;
    forEachTensor([&](const std::string&, const Tensor<Real>& t) {
      for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    });
    return acc;
  }

  std::vector<Real> flatten() const {
    std::vector<Real> out;
    out.reserve(scalarCount());
    forEachTensor([&](const std::string&, const Tensor<Real>& t) {
      out.insert(out.end(), t.values().begin(), t.values().end());
    });
    return out;
  }

  void unflatten(const std::vector<Real>& flat) {
    std::size_t off = 0;
    forEachTensor([&](const std::string&, Tensor<Real>& t) {
      if (off + t.size() > flat.size()) {
        throw std::invalid_argument("unflatten: vector too short");
      }
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.values().begin());
      off += t.size();
    });
    if (off != flat.size()) {
      throw std::invalid_argument("unflatten: vector has " + std::to_string(flat.size()) +
                                  " values, model needs " + std::to_string(off));
    }
  }
};

/// Seeded initialization. `feature_dim` > 0 switches items to the trainable
/// feature projection (Eq. 3 path); otherwise items get their own table.
template <class Real>
ModelParams<Real> initModelParams(const ModelWiring& wiring, const ModelHyper& hyper,
                                  std::size_t n_users, std::size_t n_items,
                                  std::size_t feature_dim, std::uint64_t seed) {
  hyper.validate();
  if (n_users == 0 || n_items == 0) {
    throw std::invalid_argument("model params: empty vocabulary");
  }
  ModelParams<Real> p;
  Rng user_rng(deriveSeed(seed, "init/user_emb"));
  p.user_emb = randomEmbeddings<Real>(n_users, hyper.d, user_rng);
  if (feature_dim > 0) {
    Rng proj_rng(deriveSeed(seed, "init/item_projection"));
    p.item_projection = randomProjection<Real>(feature_dim, hyper.d, proj_rng);
  } else {
    Rng item_rng(deriveSeed(seed, "init/item_emb"));
    p.item_emb = randomEmbeddings<Real>(n_items, hyper.d, item_rng);
  }
  // Xavier-style 1/sqrt(d) for the square neural maps; embeddings stay on
  // the smaller 0.1/sqrt(d) scale.
  const Real wscale = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(hyper.d)));
  if (wiring.hasLstm()) {
    Rng ulstm_rng(deriveSeed(seed, "init/user_lstm"));
    Rng ilstm_rng(deriveSeed(seed, "init/item_lstm"));
    p.user_lstm = LstmWeights<Real>::random(hyper.d, ulstm_rng, wscale);
    p.item_lstm = LstmWeights<Real>::random(hyper.d, ilstm_rng, wscale);
  }
  if (wiring.hasAttention()) {
    Rng attn_rng(deriveSeed(seed, "init/attention"));
    for (std::size_t l = 0; l < hyper.layers_attention; ++l) {
      p.attention.push_back(AttentionWeights<Real>::random(hyper.d, attn_rng, wscale));
    }
    Rng pos_rng(deriveSeed(seed, "init/positional"));
    p.positional = randomEmbeddings<Real>(hyper.m_max, hyper.d, pos_rng);
  }
  return p;
}

}  // namespace stagerec
