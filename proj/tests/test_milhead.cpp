#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsod/milhead.hpp"

using namespace wsod;

namespace {

HeadParams random_head(Rng& rng, std::size_t d, std::size_t c, double scale = 1.0) {
  HeadParams h = HeadParams::zeros("rgb", d, c);
  for (ParamTensor* p : h.params()) p->value = oracle::random_matrix(rng, p->value.rows(), p->value.cols(), scale);
  return h;
}

}  // namespace

TEST_CASE("score: zero weights and hand arithmetic") {
  const HeadParams zero = HeadParams::zeros("rgb", 3, 2);
  const RawScores s = score(Matrix{{1, 2, 3}, {4, 5, 6}}, zero);
  CHECK(s.det == Matrix(2, 2));
  CHECK(s.cls == Matrix(2, 2));

  HeadParams h = HeadParams::zeros("rgb", 2, 1);
  h.w_det.value = Matrix{{2}, {-1}};
  h.b_det.value = Matrix{{0.5}};
  CHECK(score(Matrix{{1, 0}}, h).det(0, 0) == 2.5);
}

TEST_CASE("score: random instance against a triple loop") {
  Rng rng(3);
  const HeadParams h = random_head(rng, 5, 3);
  const Matrix x = oracle::random_matrix(rng, 4, 5);
  const RawScores s = score(x, h);
  const Matrix det = oracle::matmul_bias(x, h.w_det.value, h.b_det.value);
  const Matrix cls = oracle::matmul_bias(x, h.w_cls.value, h.b_cls.value);
  for (std::size_t k = 0; k < det.size(); ++k) {
    CHECK(std::abs(s.det.data()[k] - det.data()[k]) < 1e-12);
    CHECK(std::abs(s.cls.data()[k] - cls.data()[k]) < 1e-12);
  }
}

TEST_CASE("probabilities: symmetric, single proposal and scalar oracle") {
  const ScorePack z = probabilities(Matrix(2, 2), Matrix(2, 2));
  for (double v : z.p_det.data()) CHECK(v == 0.5);
  for (double v : z.p_cls.data()) CHECK(v == 0.5);
  for (double v : z.p_comb.data()) CHECK(v == 0.25);

  const ScorePack one = probabilities(Matrix{{3.0, -7.0, 0.1}}, Matrix{{1.0, 2.0, 3.0}});
  for (double v : one.p_det.data()) CHECK(v == 1.0);

  // det column [ln 3, 0]: p_det = [3/4, 1/4]; uniform classes over C=2 give 1/2.
  const ScorePack p = probabilities(Matrix{{std::log(3.0), 0.0}, {0.0, 0.0}}, Matrix(2, 2));
  const double e3 = std::exp(std::log(3.0));
  CHECK(std::abs(p.p_comb(0, 0) - e3 / (e3 + 1.0) * 0.5) < 1e-6);
  CHECK(std::abs(p.p_comb(1, 0) - 1.0 / (e3 + 1.0) * 0.5) < 1e-6);
  CHECK(std::abs(p.p_comb(0, 0) - 0.375) < 1e-12);
  CHECK(std::abs(p.p_comb(1, 0) - 0.125) < 1e-12);
}

TEST_CASE("image_prediction: sigmoid of column sums") {
  CHECK(image_prediction(Matrix(3, 1))[0] == 0.5);
  CHECK(std::abs(image_prediction(Matrix{{0.25}, {0.75}})[0] - oracle::sigmoid(1.0)) < 1e-6);
  CHECK(std::abs(image_prediction(Matrix{{0.25}, {0.75}})[0] - 0.7310585786300049) < 1e-12);
  CHECK(std::abs(image_prediction(Matrix{{0.1}, {0.2}})[0] - oracle::sigmoid(0.3)) < 1e-6);
  CHECK(std::abs(image_prediction(Matrix{{0.1}, {0.2}})[0] - 0.574442516811659) < 1e-12);
  CHECK(std::abs(image_prediction(Matrix{{0.1}, {0.2}}, false)[0] - 0.3) < 1e-15);
}

TEST_CASE("mil_loss: closed forms") {
  CHECK(mil_loss({0.5}, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(mil_loss({0.5}, {}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double want = -std::log(0.7) - std::log(0.4);
  CHECK(std::abs(mil_loss({0.7, 0.6}, {0}) - want) < 1e-6);
  CHECK(std::abs(mil_loss({0.7, 0.6}, {0}) - 1.272965675812887) < 1e-12);
  // Clamped at 1e-7 instead of producing infinity.
  CHECK(std::isfinite(mil_loss({0.0, 1.0}, {0})));
  CHECK(mil_loss({0.0}, {0}) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("p_hat bounds, shift invariance and negative-class floor") {
  Rng rng(17);
  const double s1 = oracle::sigmoid(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t R = 1 + rng.below(8), C = 1 + rng.below(4);
    const Matrix det = oracle::random_matrix(rng, R, C, 3.0);
    const Matrix cls = oracle::random_matrix(rng, R, C, 3.0);
    const ScorePack pack = probabilities(det, cls);
    const auto p_hat = image_prediction(pack.p_comb);
    for (double p : p_hat) {
      CHECK(p >= 0.5);
      CHECK(p <= s1 + 1e-15);
    }

    Matrix shifted = det;
    const std::size_t col = rng.below(C);
    for (std::size_t i = 0; i < R; ++i) shifted(i, col) += 42.0;
    const ScorePack pack2 = probabilities(shifted, cls);
    for (std::size_t k = 0; k < pack.p_det.size(); ++k) {
      CHECK(std::abs(pack.p_det.data()[k] - pack2.p_det.data()[k]) < 1e-12);
      CHECK(std::abs(pack.p_comb.data()[k] - pack2.p_comb.data()[k]) < 1e-12);
    }
    std::vector<int> labels;
    for (std::size_t c = 0; c < C; ++c)
      if (rng.bernoulli(0.5)) labels.push_back(static_cast<int>(c));
    const double loss = mil_loss(p_hat, labels);
    CHECK(std::abs(loss - mil_loss(image_prediction(pack2.p_comb), labels)) < 1e-12);
    const double negatives = static_cast<double>(C - labels.size());
    CHECK(loss >= negatives * std::log(2.0) - 1e-12);
  }
}

TEST_CASE("MIL chain gradient check over random shapes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const std::size_t R = 1 + rng.below(8), C = 1 + rng.below(4), D = 1 + rng.below(8);
    HeadParams h = random_head(rng, D, C, 0.7);
    const Matrix x = oracle::random_matrix(rng, R, D);
    std::vector<int> labels;
    for (std::size_t c = 0; c < C; ++c)
      if (rng.bernoulli(0.5)) labels.push_back(static_cast<int>(c));
    for (bool sig : {true, false}) {
      const auto loss = [&] {
        const RawScores s = score(x, h);
        return mil_loss(image_prediction(probabilities(s.det, s.cls).p_comb, sig), labels);
      };
      for (ParamTensor* p : h.params()) p->zero_grad();
      const RawScores s = score(x, h);
      const ScorePack pack = probabilities(s.det, s.cls);
      const auto p_hat = image_prediction(pack.p_comb, sig);
      // The unsquashed sum can leave (0, 1), where the clamp flattens the loss.
      bool inside = true;
      for (double p : p_hat) inside = inside && p > 1e-6 && p < 1.0 - 1e-6;
      if (!inside) continue;
      const Matrix dp = image_prediction_backward(pack.p_comb, mil_loss_backward(p_hat, labels), sig);
      score_backward(x, h, probabilities_backward(pack, dp), nullptr);
      CHECK(grad_check(loss, h.params()) < 1e-4);
    }
  }
}
