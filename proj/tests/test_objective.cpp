#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stagerec/core/tensor.hpp"
#include "stagerec/objective/losses.hpp"
#include "stagerec/objective/scoring.hpp"

using stagerec::LossWeights;
using stagerec::Tensor;

// ----------------------------------------------------------------- scoring

TEST_CASE("fusion sums the present branches and skips empty ones") {
  Tensor<double> a({2}, {1.0, 2.0});
  Tensor<double> b({2}, {10.0, 20.0});
  Tensor<double> empty;
  auto all = stagerec::fuseVectors(a, b, a);
  CHECK(all[0] == doctest::Approx(12.0));
  CHECK(all[1] == doctest::Approx(24.0));
  auto partial = stagerec::fuseVectors(a, empty, b);
  CHECK(partial[0] == doctest::Approx(11.0));
  CHECK(partial[1] == doctest::Approx(22.0));

  Tensor<double> wrong({3});
  CHECK_THROWS_AS(stagerec::fuseVectors(a, wrong, empty), std::invalid_argument);
  CHECK_THROWS_AS(stagerec::fuseVectors(empty, empty, empty), std::invalid_argument);
}

TEST_CASE("the score is the logistic of the fused dot product") {
  // dot = ln 3  ->  logistic = 3/4
  Tensor<double> u({2}, {std::log(3.0), 0.0});
  Tensor<double> i({2}, {1.0, 5.0});
  CHECK(stagerec::scoreDot(u, i) == doctest::Approx(0.75).epsilon(1e-12));

  Tensor<double> zero({2});
  CHECK(stagerec::scoreDot(zero, i) == doctest::Approx(0.5).epsilon(1e-15));
  Tensor<double> wrong({3});
  CHECK_THROWS_AS(stagerec::scoreDot(u, wrong), std::invalid_argument);
}

TEST_CASE("fuseAndScore composes user and item fusion") {
  Tensor<double> ue({1}, {0.5});
  Tensor<double> ua({1}, {0.25});
  Tensor<double> ug({1}, {0.25});
  Tensor<double> ie({1}, {std::log(3.0) / 2.0});
  Tensor<double> ig({1}, {std::log(3.0) / 2.0});
  // user = 1.0, item = ln 3 -> score = 0.75
  CHECK(stagerec::fuseAndScore(ue, ua, ug, ie, ig) == doctest::Approx(0.75).epsilon(1e-12));
}

// --------------------------------------------------------------------- bce

TEST_CASE("bce worked example: an uninformative prediction costs ln 2") {
  CHECK(stagerec::bceLoss<double>({0.5}, {1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(stagerec::bceLoss<double>({0.5}, {0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce averages, clamps, and validates") {
  // mean of -ln(0.8) and -ln(0.6) for a confident pair
  const double expect = 0.5 * (-std::log(0.8) - std::log(1.0 - 0.4));
  CHECK(stagerec::bceLoss<double>({0.8, 0.4}, {1.0, 0.0}) == doctest::Approx(expect).epsilon(1e-12));

  // A perfectly wrong prediction is finite thanks to clamping.
  const double clamped = stagerec::bceLoss<double>({0.0}, {1.0});
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(stagerec::kBceEps)).epsilon(1e-9));

  CHECK(stagerec::bceLoss<double>({}, {}) == 0.0);
  CHECK_THROWS_AS(stagerec::bceLoss<double>({0.5}, {1.0, 0.0}), std::invalid_argument);
}

// ------------------------------------------------------------- consistency

TEST_CASE("consistency worked example: two orthogonal unit users at tau = 1") {
  // evolved == global == identity rows: per-user logits are (1, 0) and
  // (0, 1), so each user contributes log(e/(e+1))^-1 and the batch mean is
  // log(e+1) - 1 because the sum over one stage divides by B = 2.
  Tensor<double> rows({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double got = stagerec::consistencyLoss<double>({rows}, rows, 1.0);
  const double expect = std::log(std::exp(1.0) + 1.0) - 1.0;
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.31326168751822286).epsilon(1e-10));
}

TEST_CASE("consistency drops as the match sharpens and sums over stages") {
  Tensor<double> rows({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double loose = stagerec::consistencyLoss<double>({rows}, rows, 1.0);
  const double sharp = stagerec::consistencyLoss<double>({rows}, rows, 0.1);
  CHECK(sharp < loose);  // lower temperature separates the diagonal more

  const double two_stages = stagerec::consistencyLoss<double>({rows, rows}, rows, 1.0);
  CHECK(two_stages == doctest::Approx(2.0 * loose).epsilon(1e-12));

  CHECK_THROWS_AS(stagerec::consistencyLoss<double>({rows}, rows, 0.0), std::invalid_argument);
  Tensor<double> wrong({3, 2});
  CHECK_THROWS_AS(stagerec::consistencyLoss<double>({wrong}, rows, 1.0), std::invalid_argument);
}

TEST_CASE("consistency is invariant to logit shifts via max subtraction") {
  // Large-magnitude embeddings must not overflow the exponentials.
  Tensor<double> big({2, 2}, {50.0, 0.0, 0.0, 50.0});
  const double v = stagerec::consistencyLoss<double>({big}, big, 1.0);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(std::log(1.0 + std::exp(-2500.0))).epsilon(1e-9));
}

// -------------------------------------------------------------- smoothness

TEST_CASE("smoothness worked examples") {
  // One user, two stages, difference vector (1, 0): loss = 1.
  Tensor<double> s0({1, 2}, {0.0, 0.0});
  Tensor<double> s1({1, 2}, {1.0, 0.0});
  CHECK(stagerec::smoothnessLoss<double>({s0, s1}) == doctest::Approx(1.0).epsilon(1e-15));

  // Three stages stepping by (1, 0) each: two unit jumps -> loss = 2.
  Tensor<double> s2({1, 2}, {2.0, 0.0});
  CHECK(stagerec::smoothnessLoss<double>({s0, s1, s2}) == doctest::Approx(2.0).epsilon(1e-15));

  // Averaged over users: two users with the same jump still cost 1 each -> 1.
  Tensor<double> t0({2, 1}, {0.0, 0.0});
  Tensor<double> t1({2, 1}, {1.0, 1.0});
  CHECK(stagerec::smoothnessLoss<double>({t0, t1}) == doctest::Approx(1.0).epsilon(1e-15));

  // A single stage has no adjacent pairs.
  CHECK(stagerec::smoothnessLoss<double>({s0}) == 0.0);
  CHECK_THROWS_AS(stagerec::smoothnessLoss<double>({}), std::invalid_argument);
  CHECK_THROWS_AS(stagerec::smoothnessLoss<double>({s0, t0}), std::invalid_argument);
}

// ------------------------------------------------------------- composition

TEST_CASE("total loss is the weighted sum of its parts") {
  LossWeights<double> w;
  w.lambda_t = 0.5;
  w.lambda_cl = 0.25;
  w.lambda_sl = 0.125;
  w.beta = 0.01;
  auto out = stagerec::totalLoss<double>({1.0, 3.0}, 2.0, 4.0, 10.0, w);
  CHECK(out.total == doctest::Approx(0.5 * 4.0 + 0.25 * 2.0 + 0.125 * 4.0 + 0.01 * 10.0).epsilon(1e-14));
  CHECK(out.per_stage_bce.size() == 2);
  CHECK(out.l2 == 10.0);
}

TEST_CASE("loss weight validation") {
  LossWeights<double> w;
  w.lambda_t = -0.1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = LossWeights<double>{};
  w.tau = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = LossWeights<double>{};
  CHECK_NOTHROW(w.validate());
}
