#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/core/tensor.hpp"
#include "stagerec/data/interactions.hpp"
#include "stagerec/data/stages.hpp"
#include "stagerec/model/forward.hpp"
#include "stagerec/model/infer.hpp"
#include "stagerec/model/params.hpp"
#include "stagerec/numerics/gradcheck.hpp"
#include "stagerec/objective/losses.hpp"

using stagerec::Ablation;
using stagerec::BatchTuple;
using stagerec::DropoutPlan;
using stagerec::InteractionLog;
using stagerec::LossWeights;
using stagerec::ModelHyper;
using stagerec::ModelParams;
using stagerec::ModelWiring;
using stagerec::Rng;
using stagerec::StagePartition;
using stagerec::Tape;
using stagerec::Tensor;

namespace {

/// Two-stage desk dataset: three users, four items, every user active in
/// both stages.
StagePartition tinyPartition() {
  InteractionLog log;
  log.addRecord("u0", "i0", 0);
  log.addRecord("u1", "i1", 1);
  log.addRecord("u2", "i3", 2);
  log.addRecord("u0", "i1", 10);
  log.addRecord("u1", "i2", 11);
  log.addRecord("u2", "i0", 12);
  log.finalize();
  return StagePartition(log, 10);
}

ModelHyper tinyHyper() {
  ModelHyper h;
  h.d = 3;
  h.layers_global = 1;
  h.layers_stage = 1;
  h.layers_attention = 1;
  h.m_max = 3;
  return h;
}

std::vector<BatchTuple> tinyBatch() {
  return {{0, 0, 0, {2}}, {1, 1, 2, {3}}, {2, 1, 0, {1}}};
}

}  // namespace

// ------------------------------------------------------------------ params

TEST_CASE("parameter initialization is shaped by the wiring and seeded") {
  ModelHyper h;
  h.d = 8;
  h.layers_attention = 2;
  h.m_max = 4;
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto p = stagerec::initModelParams<double>(wiring, h, 5, 6, 0, 42);

  CHECK(p.user_emb.dim(0) == 5);
  CHECK(p.user_emb.dim(1) == 8);
  CHECK(p.item_emb.dim(0) == 6);
  CHECK(p.item_projection.empty());
  CHECK(p.hasLstm());
  CHECK(p.attention.size() == 2);
  CHECK(p.positional.dim(0) == 4);

  auto q = stagerec::initModelParams<double>(wiring, h, 5, 6, 0, 42);
  CHECK(p.flatten() == q.flatten());
  auto r = stagerec::initModelParams<double>(wiring, h, 5, 6, 0, 43);
  CHECK(p.flatten() != r.flatten());

  // Feature-driven items swap the embedding table for a projection.
  auto f = stagerec::initModelParams<double>(wiring, h, 5, 6, 3, 42);
  CHECK(f.item_emb.empty());
  CHECK(f.item_projection.dim(0) == 3);
  CHECK(f.item_projection.dim(1) == 8);

  CHECK_THROWS_AS(stagerec::initModelParams<double>(wiring, h, 0, 6, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("ablations strip exactly their branch parameters") {
  ModelHyper h;
  h.d = 4;
  h.layers_attention = 2;
  h.m_max = 5;
  auto count = [&](Ablation a) {
    auto p = stagerec::initModelParams<double>(ModelWiring::fromAblation(a), h, 3, 3, 0, 1);
    return p.tensorCount();
  };
  // full: embeddings (2) + two LSTMs (24) + attention (3 per layer) + positional.
  CHECK(count(Ablation::full) == 2 + 24 + 3 * 2 + 1);
  CHECK(count(Ablation::no_lpm) == 2);
  CHECK(count(Ablation::no_ste) == 2 + 3 * 2 + 1);
  CHECK(count(Ablation::no_lra) == 2 + 24);
  CHECK(count(Ablation::no_gpm) == count(Ablation::full));

  auto p = stagerec::initModelParams<double>(ModelWiring::fromAblation(Ablation::full), h, 3, 3,
                                             0, 1);
  auto flat = p.flatten();
  CHECK(flat.size() == p.scalarCount());
  flat.pop_back();
  CHECK_THROWS_AS(p.unflatten(flat), std::invalid_argument);
}

TEST_CASE("wiring flags follow the ablation table") {
  const auto full = ModelWiring::fromAblation(Ablation::full);
  CHECK(full.hasLstm());
  CHECK(full.hasAttention());
  CHECK(full.hasConsistency());
  CHECK(full.hasSmoothness());

  const auto no_lpm = ModelWiring::fromAblation(Ablation::no_lpm);
  CHECK_FALSE(no_lpm.hasLstm());
  CHECK_FALSE(no_lpm.hasAttention());
  CHECK_FALSE(no_lpm.hasConsistency());
  CHECK_FALSE(no_lpm.hasSmoothness());

  const auto no_gpm = ModelWiring::fromAblation(Ablation::no_gpm);
  CHECK(no_gpm.hasLstm());
  CHECK_FALSE(no_gpm.hasConsistency());
  CHECK(no_gpm.hasSmoothness());

  CHECK_THROWS_AS(stagerec::parseAblation("nope"), std::invalid_argument);
  CHECK(std::string(stagerec::ablationName(Ablation::no_ste)) == "no_ste");
}

// ------------------------------------------------------------------ graphs

TEST_CASE("training graphs contain no held-out edges") {
  InteractionLog log;
  log.addRecord("u", "a", 0);
  log.addRecord("u", "b", 10);
  log.addRecord("u", "c", 20);  // held out
  log.finalize();
  StagePartition part(log, 10);
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  CHECK(graphs.global.nEdges() == 2);
  CHECK(graphs.nStages() == 2);
  CHECK(graphs.stages[0].nEdges() == 1);
  const auto nb = graphs.global.userNeighbors(0);
  for (const auto& [item, coeff] : nb) {
    CHECK(item != 2);  // item "c" never enters the train graph
    (void)coeff;
  }
  CHECK_THROWS_AS(stagerec::buildGraphSet(part, {}), std::invalid_argument);
}

// -------------------------------------------------- stage seeding semantics

TEST_CASE("stage encoders start from the global embedding unless it is ablated") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  auto hyper = tinyHyper();
  hyper.layers_stage = 0;  // stage table == its seed, exposing the seeding rule

  // Evolution off isolates the seed choice in user_evolved.
  ModelWiring with_global = ModelWiring::fromAblation(Ablation::no_ste);
  auto p = stagerec::initModelParams<double>(with_global, hyper, 3, 4, 0, 9);
  auto et = stagerec::buildEvalTables(p, with_global, hyper, graphs, nullptr);
  for (std::size_t k = 0; k < et.user_global.size(); ++k) {
    CHECK(et.user_evolved[0][k] == et.user_global[k]);
  }

  ModelWiring no_global = with_global;
  no_global.global_branch = false;
  auto et2 = stagerec::buildEvalTables(p, no_global, hyper, graphs, nullptr);
  for (std::size_t k = 0; k < p.user_emb.size(); ++k) {
    CHECK(et2.user_evolved[0][k] == p.user_emb[k]);
  }
  CHECK(et2.user_global.empty());
}

// ------------------------------------------------- tape vs pure equivalence

TEST_CASE("training-path tables equal the evaluation-path tables") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 5);

  auto et = stagerec::buildEvalTables(params, wiring, hyper, graphs, nullptr);
  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  DropoutPlan<double> off;
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);

  auto cmp = [&](const Tensor<double>& pure, typename Tape<double>::Var var) {
    const auto& v = tape.value(var);
    REQUIRE(v.size() == pure.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      CHECK(v[k] == doctest::Approx(pure[k]).epsilon(1e-12));
    }
  };
  cmp(et.user_global, ft.user_global);
  cmp(et.item_global, ft.item_global);
  for (std::size_t t = 0; t < et.user_evolved.size(); ++t) {
    cmp(et.user_evolved[t], ft.user_evolved[t]);
    cmp(et.item_evolved[t], ft.item_evolved[t]);
  }
}

TEST_CASE("batch predictions equal the inference scores for the same pairs") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 5);
  auto et = stagerec::buildEvalTables(params, wiring, hyper, graphs, nullptr);

  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  DropoutPlan<double> off;
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);

  // One stage-1 tuple for user 2: positive i0, negative i1.
  std::vector<BatchTuple> tuples{{2, 1, 0, {1}}};
  auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tuples, hyper, 0.5, off);
  REQUIRE(bf.stages == std::vector<std::int32_t>{1});
  const auto& preds = tape.value(bf.stage_predictions[0]);
  REQUIRE(preds.size() == 2);

  auto fu = stagerec::fusedUserVector(et, params, wiring, part, 2, 1, hyper);
  auto fi = stagerec::fusedItemMatrix(et, wiring, 1);
  auto scores = stagerec::scoreCandidates(fu, fi, {0, 1});
  CHECK(preds[0] == doctest::Approx(scores[0]).epsilon(1e-12));
  CHECK(preds[1] == doctest::Approx(scores[1]).epsilon(1e-12));
  CHECK(bf.stage_labels[0] == std::vector<double>({1.0, 0.0}));
}

// ------------------------------------------------------- batch composition

TEST_CASE("batch forward groups stages, orders users, and wires regularizers") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 7);

  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  DropoutPlan<double> off;
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);
  auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tinyBatch(), hyper, 0.5, off);

  CHECK(bf.stages == std::vector<std::int32_t>({0, 1}));
  CHECK(tape.value(bf.stage_predictions[0]).size() == 2);  // one tuple, 1 pos + 1 neg
  CHECK(tape.value(bf.stage_predictions[1]).size() == 4);  // two tuples
  CHECK(bf.batch_users == std::vector<std::int32_t>({0, 1, 2}));
  CHECK(bf.consistency.valid());
  CHECK(bf.smoothness.valid());

  // The smoothness term matches the pure loss restricted to the batch users
  // (here: all of them).
  std::vector<Tensor<double>> evolved;
  auto et = stagerec::buildEvalTables(params, wiring, hyper, graphs, nullptr);
  for (const auto& t : et.user_evolved) evolved.push_back(t);
  const double pure_sl = stagerec::smoothnessLoss(evolved);
  CHECK(tape.value(bf.smoothness)[0] == doctest::Approx(pure_sl).epsilon(1e-10));

  // And the consistency term matches the pure InfoNCE over the same rows.
  std::vector<Tensor<double>> ev_rows;
  Tensor<double> glob({3, hyper.d});
  for (std::size_t u = 0; u < 3; ++u) {
    for (std::size_t k = 0; k < hyper.d; ++k) glob.at(u, k) = et.user_global.at(u, k);
  }
  for (const auto& t : et.user_evolved) {
    Tensor<double> rows({3, hyper.d});
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t k = 0; k < hyper.d; ++k) rows.at(u, k) = t.at(u, k);
    }
    ev_rows.push_back(rows);
  }
  const double pure_cl = stagerec::consistencyLoss(ev_rows, glob, 0.5);
  CHECK(tape.value(bf.consistency)[0] == doctest::Approx(pure_cl).epsilon(1e-10));
}

TEST_CASE("regularizers disappear with their wiring") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  DropoutPlan<double> off;

  // no_gpm: no consistency, smoothness stays.
  {
    const auto wiring = ModelWiring::fromAblation(Ablation::no_gpm);
    auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 7);
    Tape<double> tape;
    auto pv = stagerec::liftParams(tape, params);
    auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);
    auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tinyBatch(), hyper, 0.5, off);
    CHECK_FALSE(bf.consistency.valid());
    CHECK(bf.smoothness.valid());
  }
  // no_lpm: neither regularizer, predictions from the global branch alone.
  {
    const auto wiring = ModelWiring::fromAblation(Ablation::no_lpm);
    auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 7);
    Tape<double> tape;
    auto pv = stagerec::liftParams(tape, params);
    auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);
    auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tinyBatch(), hyper, 0.5, off);
    CHECK_FALSE(bf.consistency.valid());
    CHECK_FALSE(bf.smoothness.valid());
  }
  // One train stage: no adjacent pair, smoothness vanishes.
  {
    auto graphs1 = stagerec::buildGraphSet(part, {0});
    const auto wiring = ModelWiring::fromAblation(Ablation::full);
    auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 7);
    Tape<double> tape;
    auto pv = stagerec::liftParams(tape, params);
    auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs1, nullptr, off);
    std::vector<BatchTuple> tuples{{0, 0, 0, {2}}};
    auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tuples, hyper, 0.5, off);
    CHECK_FALSE(bf.smoothness.valid());
    CHECK(bf.consistency.valid());
  }
}

TEST_CASE("batch forward validates its inputs") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 7);
  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  DropoutPlan<double> off;
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);

  CHECK_THROWS_AS(stagerec::buildBatchForward<double>(tape, ft, pv, wiring, part, {}, hyper, 0.5, off),
                  std::invalid_argument);
  std::vector<BatchTuple> bad_stage{{0, 7, 0, {1}}};
  CHECK_THROWS_AS(stagerec::buildBatchForward(tape, ft, pv, wiring, part, bad_stage, hyper, 0.5, off),
                  std::out_of_range);
  std::vector<BatchTuple> ok{{0, 0, 0, {1}}};
  CHECK_THROWS_AS(stagerec::buildBatchForward(tape, ft, pv, wiring, part, ok, hyper, 0.0, off),
                  std::invalid_argument);
}

// ------------------------------------------------------------ full gradient

TEST_CASE("the composite objective passes a finite-difference check end to end") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 11);
  const auto tuples = tinyBatch();

  LossWeights<double> w;
  w.lambda_t = 0.7;
  w.lambda_cl = 0.3;
  w.lambda_sl = 0.2;
  w.tau = 0.5;
  DropoutPlan<double> off;

  auto lossAt = [&](const std::vector<double>& theta) {
    ModelParams<double> p = params;
    p.unflatten(theta);
    Tape<double> t;
    auto pv = stagerec::liftParams(t, p);
    auto ft = stagerec::buildForwardTables(t, pv, wiring, hyper, graphs, nullptr, off);
    auto bf = stagerec::buildBatchForward(t, ft, pv, wiring, part, tuples, hyper, w.tau, off);
    return t.value(stagerec::batchObjective(t, bf, w))[0];
  };

  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, nullptr, off);
  auto bf = stagerec::buildBatchForward(tape, ft, pv, wiring, part, tuples, hyper, w.tau, off);
  tape.backward(stagerec::batchObjective(tape, bf, w));

  std::vector<double> analytic;
  for (auto var : pv.ordered) {
    const auto& g = tape.gradOrZero(var);
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
  }
  const auto res = stagerec::finiteDiffCheck(lossAt, params.flatten(), analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-6);

  // The attention branch really participates: positional rows get gradient.
  const auto& gp = tape.gradOrZero(pv.positional);
  double norm = 0;
  for (std::size_t k = 0; k < gp.size(); ++k) norm += gp[k] * gp[k];
  CHECK(norm > 0.0);
}

// ---------------------------------------------------------------- dropout

TEST_CASE("dropout is inert at rate zero and in evaluation mode") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 0, 3);

  auto lossWith = [&](DropoutPlan<double> plan) {
    Tape<double> t;
    auto pv = stagerec::liftParams(t, params);
    auto ft = stagerec::buildForwardTables(t, pv, wiring, hyper, graphs, nullptr, plan);
    LossWeights<double> w;
    auto bf = stagerec::buildBatchForward(t, ft, pv, wiring, part, tinyBatch(), hyper, w.tau, plan);
    return t.value(stagerec::batchObjective(t, bf, w))[0];
  };

  Rng rng(1);
  DropoutPlan<double> zero_rate{0.0, &rng};
  DropoutPlan<double> eval_mode{0.5, nullptr};
  DropoutPlan<double> off;
  const double base = lossWith(off);
  CHECK(lossWith(zero_rate) == doctest::Approx(base).epsilon(1e-15));
  CHECK(lossWith(eval_mode) == doctest::Approx(base).epsilon(1e-15));

  DropoutPlan<double> active{0.5, &rng};
  CHECK(lossWith(active) != doctest::Approx(base).epsilon(1e-12));
}

// --------------------------------------------------------------- inference

TEST_CASE("users without history fall back to their global embedding") {
  InteractionLog log;
  log.addRecord("a", "x", 0);
  log.addRecord("a", "y", 10);
  log.addRecord("z", "x", 10);  // z is silent in stage 0
  log.finalize();
  StagePartition part(log, 10);
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 2, 2, 0, 13);
  auto et = stagerec::buildEvalTables(params, wiring, hyper, graphs, nullptr);

  const std::int32_t z = 1;
  REQUIRE(part.cumulativeClicks(z, 0) == 0);
  auto fused = stagerec::fusedUserVector(et, params, wiring, part, z, 0, hyper);
  for (std::size_t k = 0; k < hyper.d; ++k) {
    CHECK(fused[k] == et.user_global.at(static_cast<std::size_t>(z), k));
  }
}

TEST_CASE("top-k excludes consumed items and breaks ties by index") {
  InteractionLog log;
  log.addRecord("u", "i0", 0);
  log.addRecord("u", "i1", 10);
  log.addRecord("v", "i2", 0);
  log.addRecord("v", "i3", 10);
  log.finalize();
  StagePartition part(log, 10);

  Tensor<double> fused_user({1}, {1.0});
  Tensor<double> fused_items({4, 1}, {9.0, 5.0, 5.0, 1.0});

  // At stage 1, user u has consumed i0 and i1.
  auto top = stagerec::topKForUser(fused_user, fused_items, part, 0, 1, 10);
  CHECK(top == std::vector<std::int32_t>({2, 3}));

  // User v consumed i2 (stage 0) only when asked at stage 0.
  auto top_v = stagerec::topKForUser(fused_user, fused_items, part, 1, 0, 2);
  CHECK(top_v == std::vector<std::int32_t>({0, 1}));

  // Tie between i1 and i2 resolves to the lower index.
  auto tie = stagerec::topKForUser(fused_user, fused_items, part, 1, 0, 3);
  CHECK(tie == std::vector<std::int32_t>({0, 1, 3}));
}

TEST_CASE("feature-driven items flow through the projection in both paths") {
  auto part = tinyPartition();
  auto graphs = stagerec::buildGraphSet(part, {0, 1});
  const auto hyper = tinyHyper();
  const auto wiring = ModelWiring::fromAblation(Ablation::full);
  auto params = stagerec::initModelParams<double>(wiring, hyper, 3, 4, 2, 17);
  Rng rng(19);
  Tensor<double> features({4, 2});
  for (std::size_t k = 0; k < features.size(); ++k) features[k] = rng.normal();

  auto et = stagerec::buildEvalTables(params, wiring, hyper, graphs, &features);
  Tape<double> tape;
  auto pv = stagerec::liftParams(tape, params);
  DropoutPlan<double> off;
  auto ft = stagerec::buildForwardTables(tape, pv, wiring, hyper, graphs, &features, off);
  const auto& base = tape.value(ft.item_base);
  REQUIRE(base.size() == et.item_base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    CHECK(base[k] == doctest::Approx(et.item_base[k]).epsilon(1e-13));
  }

  // Without features the projection-only model cannot run.
  CHECK_THROWS_AS(stagerec::buildEvalTables(params, wiring, hyper, graphs, nullptr),
                  std::invalid_argument);
}
