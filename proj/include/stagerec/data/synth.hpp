#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/data/interactions.hpp"

namespace stagerec {

/// Parameters of the drifting-interest click simulator.
///
/// Users follow one topic per stage and resample it at each stage boundary
/// with probability `drift_prob`. Items carry a fixed topic and a publication
/// stage; clicks target the user's current topic except for uniform noise.
struct SynthConfig {
  std::int32_t n_users = 1000;
  std::int32_t n_items = 500;
  std::int32_t n_topics = 20;
  std::int32_t n_stages = 6;
  double clicks_per_stage = 6.0;  // Poisson mean per user per stage
  double drift_prob = 0.5;
  double noise_prob = 0.1;
  /// Fraction of items first published in each stage >= 1; the remainder is
  /// available from stage 0.
  double late_publish_frac = 0.08;
  /// Burst demand: probability that a click lands on an item published in
  /// the current stage (newest cohort of the chosen topic) rather than
  /// uniformly over everything published so far. News attention is
  /// recency-skewed; this is what makes freshness metrics meaningful. Kept
  /// moderate because clicks on the final stage's own cohort are unlearnable
  /// for any chronologically trained model and act as label noise there.
  double recency_boost = 0.15;
  std::int64_t stage_seconds = 604800;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_users < 1 || n_items < 1 || n_topics < 1 || n_stages < 1) {
      throw std::invalid_argument("synth: users/items/topics/stages must all be >= 1");
    }
    auto prob = [](double p, const char* name) {
      if (p < 0.0 || p > 1.0) {
        throw std::invalid_argument(std::string("synth: ") + name + " must be in [0,1]");
      }
    };
    prob(drift_prob, "drift_prob");
    prob(noise_prob, "noise_prob");
    prob(late_publish_frac, "late_publish_frac");
    prob(recency_boost, "recency_boost");
    if (late_publish_frac * (n_stages - 1) > 1.0) {
      throw std::invalid_argument("synth: late_publish_frac too large for stage count");
    }
    if (clicks_per_stage < 0.0) throw std::invalid_argument("synth: negative click rate");
    if (stage_seconds <= 0) throw std::invalid_argument("synth: stage_seconds must be positive");
  }
};

/// Ground truth behind a generated log, indexed by dense user/item index
/// (which equals the numeric id suffix).
struct SynthTruth {
  std::vector<std::vector<std::int32_t>> user_topics;  // [user][stage]
  std::vector<std::int32_t> item_topic;                // [item]
  std::vector<std::int32_t> item_publication_stage;    // [item]
  std::int32_t n_stages = 0;
};

struct SynthResult {
  InteractionLog log;
  SynthTruth truth;
};

inline SynthResult synthGenerate(const SynthConfig& cfg) {
  cfg.validate();
  Rng item_rng(deriveSeed(cfg.seed, "synth/items"));
  Rng user_rng(deriveSeed(cfg.seed, "synth/users"));
  Rng click_rng(deriveSeed(cfg.seed, "synth/clicks"));

  SynthResult out;
  auto& truth = out.truth;
  truth.n_stages = cfg.n_stages;

  // Register the full vocabularies up front so dense indices match the
  // numeric ids even for users or items that never interact.
  for (std::int32_t u = 0; u < cfg.n_users; ++u) out.log.userIndex("u" + std::to_string(u));
  for (std::int32_t i = 0; i < cfg.n_items; ++i) out.log.itemIndex("i" + std::to_string(i));

  // Items: topic and publication stage.
  truth.item_topic.resize(static_cast<std::size_t>(cfg.n_items));
  truth.item_publication_stage.resize(static_cast<std::size_t>(cfg.n_items));
  const double p_late_total = cfg.late_publish_frac * (cfg.n_stages - 1);
  for (std::int32_t i = 0; i < cfg.n_items; ++i) {
    truth.item_topic[static_cast<std::size_t>(i)] =
        static_cast<std::int32_t>(item_rng.below(static_cast<std::uint64_t>(cfg.n_topics)));
    std::int32_t pub = 0;
    if (cfg.n_stages > 1 && item_rng.uniform() < p_late_total) {
      pub = 1 + static_cast<std::int32_t>(item_rng.below(static_cast<std::uint64_t>(cfg.n_stages - 1)));
    }
    truth.item_publication_stage[static_cast<std::size_t>(i)] = pub;
  }

  // Per (topic, stage) pools of published items, the newest cohort of each
  // pool (published exactly at the stage), plus an any-topic pool.
  std::vector<std::vector<std::vector<std::int32_t>>> pool(
      static_cast<std::size_t>(cfg.n_topics),
      std::vector<std::vector<std::int32_t>>(static_cast<std::size_t>(cfg.n_stages)));
  std::vector<std::vector<std::vector<std::int32_t>>> fresh_pool(
      static_cast<std::size_t>(cfg.n_topics),
      std::vector<std::vector<std::int32_t>>(static_cast<std::size_t>(cfg.n_stages)));
  std::vector<std::vector<std::int32_t>> published(static_cast<std::size_t>(cfg.n_stages));
  for (std::int32_t t = 0; t < cfg.n_stages; ++t) {
    for (std::int32_t i = 0; i < cfg.n_items; ++i) {
      const auto pub = truth.item_publication_stage[static_cast<std::size_t>(i)];
      const auto topic = static_cast<std::size_t>(truth.item_topic[static_cast<std::size_t>(i)]);
      if (pub <= t) {
        pool[topic][static_cast<std::size_t>(t)].push_back(i);
        published[static_cast<std::size_t>(t)].push_back(i);
        if (pub == t) fresh_pool[topic][static_cast<std::size_t>(t)].push_back(i);
      }
    }
  }

  // User topic trajectories: resample (uniformly, possibly to the same
  // topic) at each boundary with probability drift_prob.
  truth.user_topics.assign(static_cast<std::size_t>(cfg.n_users),
                           std::vector<std::int32_t>(static_cast<std::size_t>(cfg.n_stages), 0));
  for (std::int32_t u = 0; u < cfg.n_users; ++u) {
    auto& topics = truth.user_topics[static_cast<std::size_t>(u)];
    topics[0] = static_cast<std::int32_t>(user_rng.below(static_cast<std::uint64_t>(cfg.n_topics)));
    for (std::int32_t t = 1; t < cfg.n_stages; ++t) {
      topics[static_cast<std::size_t>(t)] =
          (user_rng.uniform() < cfg.drift_prob)
              ? static_cast<std::int32_t>(user_rng.below(static_cast<std::uint64_t>(cfg.n_topics)))
              : topics[static_cast<std::size_t>(t - 1)];
    }
  }

  // Clicks.
  struct PendingClick {
    std::int32_t user, item;
    std::int64_t ts;
  };
  std::vector<PendingClick> clicks;
  std::vector<std::size_t> clicks_in_stage(static_cast<std::size_t>(cfg.n_stages), 0);
  auto emit = [&](std::int32_t u, std::int32_t t, std::int32_t item, std::int64_t ts) {
    clicks.push_back({u, item, ts});
    ++clicks_in_stage[static_cast<std::size_t>(t)];
  };

  for (std::int32_t u = 0; u < cfg.n_users; ++u) {
    for (std::int32_t t = 0; t < cfg.n_stages; ++t) {
      const int k = click_rng.poisson(cfg.clicks_per_stage);
      for (int c = 0; c < k; ++c) {
        std::int32_t topic = truth.user_topics[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)];
        if (click_rng.uniform() < cfg.noise_prob) {
          topic = static_cast<std::int32_t>(click_rng.below(static_cast<std::uint64_t>(cfg.n_topics)));
        }
        const bool burst = click_rng.uniform() < cfg.recency_boost;
        const auto& newest = fresh_pool[static_cast<std::size_t>(topic)][static_cast<std::size_t>(t)];
        const auto& topical = (burst && !newest.empty())
                                  ? newest
                                  : pool[static_cast<std::size_t>(topic)][static_cast<std::size_t>(t)];
        const auto& fallback = published[static_cast<std::size_t>(t)];
        const auto& src = topical.empty() ? fallback : topical;
        if (src.empty()) continue;  // nothing published yet in this stage
        const std::int32_t item = src[click_rng.below(src.size())];
        const std::int64_t ts = static_cast<std::int64_t>(t) * cfg.stage_seconds +
                                static_cast<std::int64_t>(click_rng.below(
                                    static_cast<std::uint64_t>(cfg.stage_seconds)));
        emit(u, t, item, ts);
      }
    }
  }

  // Every stage needs at least one click so that window discretization of
  // the log reproduces exactly n_stages stages.
  for (std::int32_t t = 0; t < cfg.n_stages; ++t) {
    if (clicks_in_stage[static_cast<std::size_t>(t)] > 0) continue;
    const auto& fallback = published[static_cast<std::size_t>(t)];
    const auto& src = fallback.empty() ? published[static_cast<std::size_t>(cfg.n_stages - 1)] : fallback;
    if (src.empty()) throw std::runtime_error("synth: no items published in any stage");
    const auto u = static_cast<std::int32_t>(t % cfg.n_users);
    emit(u, t, src[click_rng.below(src.size())],
         static_cast<std::int64_t>(t) * cfg.stage_seconds);
  }

  // Pin the earliest click to t = 0 so the discretization origin coincides
  // with the generation grid (otherwise all window boundaries would shift).
  std::size_t min_idx = 0;
  for (std::size_t i = 1; i < clicks.size(); ++i) {
    if (clicks[i].ts < clicks[min_idx].ts) min_idx = i;
  }
  clicks[min_idx].ts = 0;

  for (const auto& c : clicks) {
    out.log.addRecord("u" + std::to_string(c.user), "i" + std::to_string(c.item), c.ts);
  }
  out.log.finalize();
  return out;
}

}  // namespace stagerec
