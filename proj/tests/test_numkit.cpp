#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsod/error.hpp"
#include "wsod/milhead.hpp"
#include "wsod/numkit.hpp"

using namespace wsod;

TEST_CASE("affine: hand arithmetic and identity") {
  const Matrix out = affine(Matrix{{1, 0}}, Matrix{{2}, {-1}}, Matrix{{0.5}});
  CHECK(out == Matrix{{2.5}});

  const Matrix x{{1, 2, 3}, {-4, 5, 0.5}};
  CHECK(affine(x, Matrix::identity(3), Matrix(1, 3)) == x);
}

TEST_CASE("affine: matches a triple-loop product") {
  Rng rng(21);
  const Matrix x = oracle::random_matrix(rng, 3, 4);
  const Matrix w = oracle::random_matrix(rng, 4, 2);
  const Matrix b = oracle::random_matrix(rng, 1, 2);
  const Matrix got = affine(x, w, b);
  const Matrix want = oracle::matmul_bias(x, w, b);
  for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::abs(got.data()[k] - want.data()[k]) < 1e-12);
}

TEST_CASE("affine: shape mismatch") {
  try {
    affine(Matrix(2, 3), Matrix(2, 2), Matrix(1, 2));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
  }
}

TEST_CASE("softmax_cols: closed forms") {
  const Matrix eq = softmax_cols(Matrix{{0.7}, {0.7}, {0.7}});
  for (double v : eq.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Matrix two = softmax_cols(Matrix{{std::log(2.0)}, {0.0}});
  CHECK(two(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(two(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Matrix big = softmax_cols(Matrix{{1000.0}, {1000.0}});
  CHECK(big(0, 0) == 0.5);
  CHECK(big(1, 0) == 0.5);
}

TEST_CASE("softmax_rows: transposed cases") {
  const Matrix eq = softmax_rows(Matrix{{0.7, 0.7, 0.7}});
  for (double v : eq.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Matrix two = softmax_rows(Matrix{{std::log(2.0), 0.0}});
  CHECK(two(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(two(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Matrix big = softmax_rows(Matrix{{1000.0, 1000.0}});
  CHECK(big(0, 0) == 0.5);
  CHECK(big(0, 1) == 0.5);
}

TEST_CASE("softmax: simplex and shift invariance on random input") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = oracle::random_matrix(rng, 5, 4, 3.0);
    Matrix shifted_c = s, shifted_r = s;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        shifted_c(i, c) += 10.0 * static_cast<double>(c);
        shifted_r(i, c) -= 7.0 * static_cast<double>(i);
      }
    const Matrix pc = softmax_cols(s), pr = softmax_rows(s);
    const Matrix pc2 = softmax_cols(shifted_c), pr2 = softmax_rows(shifted_r);
    for (std::size_t c = 0; c < 4; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(pc(i, c) >= 0.0);
        sum += pc(i, c);
        CHECK(std::abs(pc(i, c) - pc2(i, c)) < 1e-12);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        sum += pr(i, c);
        CHECK(std::abs(pr(i, c) - pr2(i, c)) < 1e-12);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("sgd: plain step, fixed point and momentum recurrence") {
  ParamTensor p("x", Matrix{{1.0}});
  {
    Sgd sgd(1.0, 0.0);
    p.grad(0, 0) = 0.5;
    sgd.step({&p});
    CHECK(p.value(0, 0) == 0.5);
    CHECK(p.grad(0, 0) == 0.0);
    sgd.step({&p});
    CHECK(p.value(0, 0) == 0.5);
  }
  {
    // v1 = -lr g; v2 = 0.9 v1 - lr g = -lr g (1 + 0.9).
    const double lr = 0.1, g = 0.3;
    ParamTensor q("y", Matrix{{2.0}});
    Sgd sgd(lr, 0.9);
    q.grad(0, 0) = g;
    sgd.step({&q});
    const double after1 = q.value(0, 0);
    q.grad(0, 0) = g;
    sgd.step({&q});
    CHECK(std::abs((q.value(0, 0) - after1) - (-lr * g * 1.9)) < 1e-15);
  }
}

TEST_CASE("sgd: nonfinite gradient leaves parameters untouched") {
  ParamTensor a("a", Matrix{{1.0}}), b("b", Matrix{{2.0}});
  a.grad(0, 0) = 1.0;
  b.grad(0, 0) = NAN;
  Sgd sgd(0.1, 0.0);
  try {
    sgd.step({&a, &b});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(a.value(0, 0) == 1.0);
  CHECK(b.value(0, 0) == 2.0);
}

TEST_CASE("grad_check: polynomial and a deliberately wrong gradient") {
  ParamTensor t("theta", Matrix{{3.0}});
  const auto f = [&] { return t.value(0, 0) * t.value(0, 0); };
  t.grad(0, 0) = 6.0;
  CHECK(grad_check(f, {&t}) < 1e-9);
  t.grad(0, 0) = 12.0;
  CHECK(grad_check(f, {&t}) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("grad_check: full MIL loss on a random R=5, C=3 instance") {
  Rng rng(8);
  const std::size_t R = 5, C = 3, D = 4;
  const Matrix x = oracle::random_matrix(rng, R, D);
  HeadParams head = HeadParams::zeros("h", D, C);
  for (ParamTensor* p : head.params()) p->value = oracle::random_matrix(rng, p->value.rows(), p->value.cols(), 0.5);
  const std::vector<int> labels{0, 2};
  const auto loss = [&] {
    const RawScores s = score(x, head);
    const ScorePack pack = probabilities(s.det, s.cls);
    return mil_loss(image_prediction(pack.p_comb), labels);
  };
  const RawScores s = score(x, head);
  const ScorePack pack = probabilities(s.det, s.cls);
  const auto p_hat = image_prediction(pack.p_comb);
  const Matrix dp = image_prediction_backward(pack.p_comb, mil_loss_backward(p_hat, labels));
  score_backward(x, head, probabilities_backward(pack, dp), nullptr);
  CHECK(grad_check(loss, head.params()) < 1e-4);
}

TEST_CASE("checkpoint: round trip is bit exact") {
  Rng rng(2);
  ParamTensor a("a.w", oracle::random_matrix(rng, 3, 2)), b("b", Matrix{{0.1, 1.0 / 3.0, -2e-300}});
  const std::string text = checkpoint_to_json({&a, &b});
  const auto back = checkpoint_from_json(text);
  CHECK(back.at("a.w") == a.value);
  CHECK(back.at("b") == b.value);
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  CHECK_THROWS_AS(checkpoint_from_json("{\"x\": {\"shape\": [2, 2], \"values\": [1]}}"), Error);
}
