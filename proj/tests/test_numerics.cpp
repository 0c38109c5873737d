#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "stagerec/core/rng.hpp"
#include "stagerec/core/tape.hpp"
#include "stagerec/core/tensor.hpp"
#include "stagerec/numerics/adam.hpp"
#include "stagerec/numerics/attention.hpp"
#include "stagerec/numerics/gradcheck.hpp"
#include "stagerec/numerics/lstm.hpp"

using stagerec::AdamConfig;
using stagerec::AdamState;
using stagerec::AttentionWeights;
using stagerec::LstmWeights;
using stagerec::Rng;
using stagerec::Tape;
using stagerec::Tensor;

namespace {

Tensor<double> randomTensor(const std::vector<std::size_t>& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

/// Straight-line LSTM evaluation, independent of the library kernel: explicit
/// matvec loops and scalar gate formulas.
void referenceLstmRow(const double* x, const double* h, const double* c,
                      const LstmWeights<double>& w, std::size_t d, double* h_out, double* c_out) {
  auto matvec = [&](const Tensor<double>& wx, const Tensor<double>& wh, const Tensor<double>& b,
                    std::size_t j) {
    double acc = b[j];
    for (std::size_t p = 0; p < d; ++p) acc += x[p] * wx.at(p, j) + h[p] * wh.at(p, j);
    return acc;
  };
  for (std::size_t j = 0; j < d; ++j) {
    const double gi = 1.0 / (1.0 + std::exp(-matvec(w.wx_i, w.wh_i, w.b_i, j)));
    const double gf = 1.0 / (1.0 + std::exp(-matvec(w.wx_f, w.wh_f, w.b_f, j)));
    const double gg = std::tanh(matvec(w.wx_g, w.wh_g, w.b_g, j));
    const double go = 1.0 / (1.0 + std::exp(-matvec(w.wx_o, w.wh_o, w.b_o, j)));
    c_out[j] = gf * c[j] + gi * gg;
    h_out[j] = go * std::tanh(c_out[j]);
  }
}

}  // namespace

// -------------------------------------------------------------------- lstm

TEST_CASE("lstm with zero weights and zero state outputs zero") {
  const std::size_t d = 3;
  auto w = LstmWeights<double>::zeros(d);
  Rng rng(1);
  auto x = randomTensor({2, d}, rng, 5.0);
  auto st = stagerec::lstmCell(x, Tensor<double>({2, d}), Tensor<double>({2, d}), w);
  for (std::size_t i = 0; i < st.h.size(); ++i) {
    CHECK(st.h[i] == 0.0);
    CHECK(st.c[i] == 0.0);
  }
}

TEST_CASE("lstm scalar worked example: saturated forget gate carries the cell") {
  auto w = LstmWeights<double>::zeros(1);
  w.b_f[0] = 100.0;
  Tensor<double> x({1, 1});
  Tensor<double> h({1, 1});
  Tensor<double> c({1, 1});
  c[0] = 2.0;
  auto st = stagerec::lstmCell(x, h, c, w);
  CHECK(st.c[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(st.h[0] == doctest::Approx(0.5 * std::tanh(2.0)).epsilon(1e-10));
  CHECK(st.h[0] == doctest::Approx(0.4820137900379084).epsilon(1e-10));
}

TEST_CASE("lstm matches an independent hand-unrolled evaluation") {
  const std::size_t d = 4, n = 3;
  Rng rng(42);
  auto w = LstmWeights<double>::random(d, rng, 0.5);
  auto x = randomTensor({n, d}, rng);
  auto h = randomTensor({n, d}, rng);
  auto c = randomTensor({n, d}, rng);
  auto st = stagerec::lstmCell(x, h, c, w);
  for (std::size_t r = 0; r < n; ++r) {
    double href[4], cref[4];
    referenceLstmRow(x.row(r), h.row(r), c.row(r), w, d, href, cref);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(st.h.at(r, j) == doctest::Approx(href[j]).epsilon(1e-10));
      CHECK(st.c.at(r, j) == doctest::Approx(cref[j]).epsilon(1e-10));
    }
  }
}

TEST_CASE("lstm dimension mismatch names the offending tensor") {
  auto w = LstmWeights<double>::zeros(2);
  bool named = false;
  try {
    stagerec::lstmCell(Tensor<double>({1, 3}), Tensor<double>({1, 2}), Tensor<double>({1, 2}), w);
  } catch (const std::invalid_argument& e) {
    named = std::string(e.what()).find("x") != std::string::npos;
  }
  CHECK(named);
}

TEST_CASE("tape lstm step equals the pure cell and is differentiable") {
  const std::size_t d = 3, n = 2;
  Rng rng(7);
  auto w = LstmWeights<double>::random(d, rng, 0.6);
  auto x1 = randomTensor({n, d}, rng);
  auto x2 = randomTensor({n, d}, rng);

  // Value equivalence over a two-step chain.
  auto s1 = stagerec::lstmCell(x1, Tensor<double>({n, d}), Tensor<double>({n, d}), w);
  auto s2 = stagerec::lstmCell(x2, s1.h, s1.c, w);

  Tape<double> tape;
  auto wv = stagerec::liftLstm(tape, w);
  auto xv1 = tape.leaf(x1);
  auto xv2 = tape.leaf(x2);
  auto zero = tape.leaf(Tensor<double>({n, d}));
  auto t1 = stagerec::lstmStep(tape, xv1, zero, zero, wv);
  auto t2 = stagerec::lstmStep(tape, xv2, t1.h, t1.c, wv);
  for (std::size_t i = 0; i < s2.h.size(); ++i) {
    CHECK(tape.value(t2.h)[i] == doctest::Approx(s2.h[i]).epsilon(1e-12));
    CHECK(tape.value(t2.c)[i] == doctest::Approx(s2.c[i]).epsilon(1e-12));
  }

  // Gradient through the chain w.r.t. one weight matrix and one input.
  std::vector<double> flat;
  for (std::size_t i = 0; i < w.wx_i.size(); ++i) flat.push_back(w.wx_i[i]);
  for (std::size_t i = 0; i < x1.size(); ++i) flat.push_back(x1[i]);

  auto lossAt = [&](const std::vector<double>& theta) {
    LstmWeights<double> wl = w;
    Tensor<double> xl = x1;
    std::size_t off = 0;
    for (std::size_t i = 0; i < wl.wx_i.size(); ++i) wl.wx_i[i] = theta[off++];
    for (std::size_t i = 0; i < xl.size(); ++i) xl[i] = theta[off++];
    Tape<double> t;
    auto wvar = stagerec::liftLstm(t, wl);
    auto z = t.leaf(Tensor<double>({n, d}));
    auto a = stagerec::lstmStep(t, t.leaf(xl), z, z, wvar);
    auto b = stagerec::lstmStep(t, t.leaf(x2), a.h, a.c, wvar);
    return t.value(t.sumSquares(b.h))[0];
  };

  Tape<double> gt;
  auto gw = stagerec::liftLstm(gt, w);
  auto gz = gt.leaf(Tensor<double>({n, d}));
  auto gx1 = gt.leaf(x1);
  auto ga = stagerec::lstmStep(gt, gx1, gz, gz, gw);
  auto gb = stagerec::lstmStep(gt, gt.leaf(x2), ga.h, ga.c, gw);
  gt.backward(gt.sumSquares(gb.h));
  std::vector<double> analytic;
  const auto gwx = gt.gradOrZero(gw.wx_i);
  for (std::size_t i = 0; i < gwx.size(); ++i) analytic.push_back(gwx[i]);
  const auto gx = gt.gradOrZero(gx1);
  for (std::size_t i = 0; i < gx.size(); ++i) analytic.push_back(gx[i]);

  const auto res = stagerec::finiteDiffCheck(lossAt, flat, analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

// --------------------------------------------------------------- attention

TEST_CASE("single token with identity projections is doubled by the residual") {
  const std::size_t d = 3;
  auto w = AttentionWeights<double>::zeros(d);
  for (std::size_t i = 0; i < d; ++i) {
    w.wq.at(i, i) = 1.0;
    w.wk.at(i, i) = 1.0;
    w.wv.at(i, i) = 1.0;
  }
  Tensor<double> s({1, d}, {1.0, -2.0, 0.5});
  auto out = stagerec::selfAttentionLayer(s, w);
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(out.output.at(0, j) == doctest::Approx(2.0 * s[j]).epsilon(1e-12));
  }
  CHECK(out.weights.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two identical tokens split attention evenly and still double") {
  const std::size_t d = 2;
  auto w = AttentionWeights<double>::zeros(d);
  for (std::size_t i = 0; i < d; ++i) {
    w.wq.at(i, i) = 1.0;
    w.wk.at(i, i) = 1.0;
    w.wv.at(i, i) = 1.0;
  }
  Tensor<double> s({2, d}, {0.7, -0.3, 0.7, -0.3});
  auto out = stagerec::selfAttentionLayer(s, w);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out.weights.at(r, 0) == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(out.output.at(r, j) == doctest::Approx(2.0 * s.at(0, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention weight rows sum to one; empty input rejected") {
  Rng rng(9);
  auto w = AttentionWeights<double>::random(4, rng, 0.7);
  auto s = randomTensor({5, 4}, rng);
  auto out = stagerec::selfAttentionLayer(s, w);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 5; ++c) sum += out.weights.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(stagerec::selfAttentionLayer(Tensor<double>({0, 4}), w), std::invalid_argument);
}

TEST_CASE("attention is permutation-equivariant over tokens") {
  Rng rng(23);
  const std::size_t n = 4, d = 3;
  auto w = AttentionWeights<double>::random(d, rng, 0.8);
  auto s = randomTensor({n, d}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor<double> sp({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) sp.at(r, j) = s.at(perm[r], j);
  }
  auto base = stagerec::selfAttentionLayer(s, w);
  auto permuted = stagerec::selfAttentionLayer(sp, w);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(permuted.output.at(r, j) == doctest::Approx(base.output.at(perm[r], j)).epsilon(1e-10));
    }
  }
}

TEST_CASE("tape attention equals the pure layer and is differentiable") {
  Rng rng(31);
  const std::size_t n = 3, d = 4;
  auto w = AttentionWeights<double>::random(d, rng, 0.5);
  auto s = randomTensor({n, d}, rng);

  auto pure = stagerec::selfAttentionLayer(s, w).output;
  Tape<double> tape;
  auto wv = stagerec::liftAttention(tape, w);
  auto out = stagerec::attentionLayerOnTape(tape, tape.leaf(s), wv);
  for (std::size_t i = 0; i < pure.size(); ++i) {
    CHECK(tape.value(out)[i] == doctest::Approx(pure[i]).epsilon(1e-12));
  }

  // Gradient w.r.t. all three projections and the input.
  std::vector<double> flat;
  for (const auto* m : {&w.wq, &w.wk, &w.wv}) {
    flat.insert(flat.end(), m->values().begin(), m->values().end());
  }
  flat.insert(flat.end(), s.values().begin(), s.values().end());

  auto lossAt = [&](const std::vector<double>& theta) {
    AttentionWeights<double> wl = w;
    Tensor<double> sl = s;
    std::size_t off = 0;
    for (auto* m : {&wl.wq, &wl.wk, &wl.wv}) {
      for (auto& v : m->values()) v = theta[off++];
    }
    for (auto& v : sl.values()) v = theta[off++];
    Tape<double> t;
    auto wvar = stagerec::liftAttention(t, wl);
    auto o = stagerec::attentionLayerOnTape(t, t.leaf(sl), wvar);
    return t.value(t.sumSquares(o))[0];
  };

  Tape<double> gt;
  auto gw = stagerec::liftAttention(gt, w);
  auto gs = gt.leaf(s);
  auto go = stagerec::attentionLayerOnTape(gt, gs, gw);
  gt.backward(gt.sumSquares(go));
  std::vector<double> analytic;
  for (auto var : {gw.wq, gw.wk, gw.wv, gs}) {
    const auto g = gt.gradOrZero(var);
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
  }

  const auto res = stagerec::finiteDiffCheck(lossAt, flat, analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

// -------------------------------------------------------------------- adam

TEST_CASE("adam with zero gradient and zero decay is the identity") {
  Tensor<double> theta({2, 2}, {1.0, -2.0, 3.0, -4.0});
  const auto before = theta;
  AdamConfig<double> cfg;
  auto state = AdamState<double>::init({&theta}, cfg);
  Tensor<double> zero({2, 2});
  for (int step = 0; step < 3; ++step) {
    stagerec::adamStep<double>({&theta}, {&zero}, state);
  }
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(theta[i] == before[i]);
}

TEST_CASE("adam single-step worked example: unit gradient moves by -lr") {
  Tensor<double> theta({1}, {0.0});
  AdamConfig<double> cfg;
  cfg.learning_rate = 0.001;
  auto state = AdamState<double>::init({&theta}, cfg);
  Tensor<double> g({1}, {1.0});
  stagerec::adamStep<double>({&theta}, {&g}, state);
  // Bias-corrected m-hat = 1, v-hat = 1: step = -lr / (1 + eps).
  CHECK(theta[0] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(theta[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam two constant-gradient steps follow the closed-form trajectory") {
  Tensor<double> theta({1}, {0.5});
  AdamConfig<double> cfg;
  cfg.learning_rate = 0.01;
  auto state = AdamState<double>::init({&theta}, cfg);
  Tensor<double> g({1}, {1.0});
  stagerec::adamStep<double>({&theta}, {&g}, state);
  stagerec::adamStep<double>({&theta}, {&g}, state);
  // With constant gradient both bias-corrected moments are exactly 1 every
  // step, so each step moves by -lr/(1+eps).
  CHECK(theta[0] == doctest::Approx(0.5 - 2.0 * 0.01 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam reports slot on shape mismatch and on non-finite update") {
  Tensor<double> theta({2});
  AdamConfig<double> cfg;
  auto state = AdamState<double>::init({&theta}, cfg);
  Tensor<double> wrong({3});
  CHECK_THROWS_AS(stagerec::adamStep<double>({&theta}, {&wrong}, state), std::invalid_argument);

  auto state2 = AdamState<double>::init({&theta}, cfg);
  Tensor<double> nan_grad({2});
  nan_grad[0] = std::nan("");
  CHECK_THROWS(stagerec::adamStep<double>({&theta}, {&nan_grad}, state2));
}

TEST_CASE("adam weight decay pulls parameters toward zero") {
  Tensor<double> theta({1}, {1.0});
  AdamConfig<double> cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  auto state = AdamState<double>::init({&theta}, cfg);
  Tensor<double> zero({1});
  stagerec::adamStep<double>({&theta}, {&zero}, state);
  CHECK(theta[0] < 1.0);
  CHECK(theta[0] > 0.0);
}

// --------------------------------------------------------------- gradcheck

TEST_CASE("finite differences are near-exact on a quadratic") {
  auto loss = [](const std::vector<double>& t) { return t[0] * t[0]; };
  const auto res = stagerec::finiteDiffCheck(loss, {3.0}, {6.0}, 1e-4);
  CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("a deliberately wrong analytic gradient is flagged with the expected ratio") {
  auto loss = [](const std::vector<double>& t) { return 6.0 * t[0]; };
  const auto res = stagerec::finiteDiffCheck(loss, {1.0}, {5.0}, 1e-4);
  CHECK(res.max_rel_err == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
  CHECK(res.worst_index == 0);
}

TEST_CASE("non-finite loss during probing throws") {
  auto loss = [](const std::vector<double>& t) {
    return t[0] > 1.0 ? std::numeric_limits<double>::quiet_NaN() : t[0];
  };
  CHECK_THROWS(stagerec::finiteDiffCheck(loss, {1.0}, {1.0}, 1.0));
}
