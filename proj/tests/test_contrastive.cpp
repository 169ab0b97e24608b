#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsod/contrastive.hpp"
#include "wsod/error.hpp"

using namespace wsod;

namespace {

ProjectionParams identity_projection(std::size_t d) {
  ProjectionParams p = ProjectionParams::create(d, d, 0.1);
  p.w_proj.value = Matrix::identity(d);
  return p;
}

Matrix unit_rows(Rng& rng, std::size_t b, std::size_t d) {
  Matrix m = oracle::random_matrix(rng, b, d);
  for (std::size_t i = 0; i < b; ++i) {
    double n = 0.0;
    for (double v : m.row_span(i)) n += v * v;
    n = std::sqrt(n);
    for (double& v : m.row_span(i)) v /= n;
  }
  return m;
}

// -log(e^{S_ii} / sum_j e^{S_ij}) averaged over anchors, both directions.
double nce_oracle(const Matrix& a, const Matrix& b, double rho) {
  const std::size_t B = a.rows();
  auto sim = [&](std::size_t i, std::size_t j) {
    double dot = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) dot += a(i, k) * b(j, k);
    return dot / rho;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double den_r = 0.0, den_d = 0.0;
    for (std::size_t j = 0; j < B; ++j) {
      den_r += std::exp(sim(i, j));
      den_d += std::exp(sim(j, i));
    }
    total += -std::log(std::exp(sim(i, i)) / den_r) - std::log(std::exp(sim(i, i)) / den_d);
  }
  return total / (2.0 * static_cast<double>(B));
}

}  // namespace

TEST_CASE("project: identity cases and unit norms") {
  const ProjectionParams id = identity_projection(2);
  CHECK(project(Matrix{{0.6, 0.8}}, id) == Matrix{{0.6, 0.8}});
  const Matrix p = project(Matrix{{3.0, 4.0}}, id);
  CHECK(std::abs(p(0, 0) - 0.6) < 1e-15);
  CHECK(std::abs(p(0, 1) - 0.8) < 1e-15);

  Rng rng(4);
  ProjectionParams rp = ProjectionParams::create(6, 5, 0.1);
  rp.w_proj.value = oracle::random_matrix(rng, 6, 5);
  rp.b_proj.value = oracle::random_matrix(rng, 1, 5);
  const Matrix e = project(oracle::random_matrix(rng, 7, 6), rp);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double n = 0.0;
    for (double v : e.row_span(i)) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  }
}

TEST_CASE("project: zero-norm row is a numeric error") {
  try {
    project(Matrix{{0.0, 0.0}}, identity_projection(2));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
}

TEST_CASE("similarity: closed forms") {
  const std::vector<double> a{0.6, 0.8}, o{-0.8, 0.6};
  CHECK(similarity(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(similarity(a, o, 1.0) == 0.0);
  CHECK(similarity(a, a, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("nce_loss: closed forms") {
  CHECK(nce_loss(Matrix{{1.0, 0.0}}, Matrix{{0.0, 1.0}}, 0.1) == 0.0);

  const Matrix same{{1.0, 0.0}, {1.0, 0.0}};
  CHECK(nce_loss(same, same, 0.3) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const Matrix eye{{1.0, 0.0}, {0.0, 1.0}};
  const double e = std::exp(1.0);
  CHECK(std::abs(nce_loss(eye, eye, 1.0) - (-std::log(e / (e + 1.0)))) < 1e-6);
  CHECK(std::abs(nce_loss(eye, eye, 1.0) - 0.31326168751822286) < 1e-12);
}

TEST_CASE("nce_loss: literal denominator counts the positive twice") {
  const Matrix eye{{1.0, 0.0}, {0.0, 1.0}};
  const double e = std::exp(1.0);
  NceOptions lit;
  lit.include_positive_in_sum = true;
  CHECK(std::abs(nce_loss(eye, eye, 1.0, lit) - (-std::log(e / (2.0 * e + 1.0)))) < 1e-12);
}

TEST_CASE("nce_loss: vanishes for well separated pairs") {
  // Positives at 50 / rho and negatives at -50 / rho.
  const Matrix rgb{{1.0, 0.0}, {-1.0, 0.0}};
  const double loss = nce_loss(rgb, rgb, 1.0 / 50.0);
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-6);
}

TEST_CASE("nce_loss: symmetry, permutation and oracle agreement") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t B = 2 + rng.below(5), d = 2 + rng.below(6);
    const Matrix a = unit_rows(rng, B, d), b = unit_rows(rng, B, d);
    const double rho = 0.05 + rng.uniform();
    const double loss = nce_loss(a, b, rho);
    CHECK(loss >= 0.0);
    CHECK(std::abs(loss - nce_oracle(a, b, rho)) < 1e-10);
    CHECK(std::abs(loss - nce_loss(b, a, rho)) < 1e-12);

    std::vector<std::size_t> perm(B);
    for (std::size_t i = 0; i < B; ++i) perm[i] = i;
    rng.shuffle(perm);
    Matrix pa(B, d), pb(B, d);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        pa(i, k) = a(perm[i], k);
        pb(i, k) = b(perm[i], k);
      }
    CHECK(std::abs(loss - nce_loss(pa, pb, rho)) < 1e-12);
  }
}

TEST_CASE("nce: gradient check through the projection and temperature") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(40 + seed);
    const std::size_t B = 4, D = 5, P = 8;
    ProjectionParams pp = ProjectionParams::create(D, P, 0.3 + 0.2 * rng.uniform());
    pp.w_proj.value = oracle::random_matrix(rng, D, P, 0.5);
    pp.b_proj.value = oracle::random_matrix(rng, 1, P, 0.5);
    const Matrix xv = oracle::random_matrix(rng, B, D), xd = oracle::random_matrix(rng, B, D);
    const auto loss = [&] {
      return nce_loss(project(xv, pp), project(xd, pp), pp.temperature());
    };
    const Projection pv = project_with_cache(xv, pp), pd = project_with_cache(xd, pp);
    const NceResult r = nce(pv.embedding, pd.embedding, pp.temperature());
    project_backward(xv, pp, pv, r.d_rgb, nullptr);
    project_backward(xd, pp, pd, r.d_depth, nullptr);
    pp.rho.grad(0, 0) += r.d_rho;
    CHECK(grad_check(loss, pp.params()) < 1e-4);
  }
}

TEST_CASE("temperature clamp") {
  ProjectionParams p = ProjectionParams::create(2, 2, 5.0);
  p.clamp_temperature();
  CHECK(p.temperature() == kRhoMax);
  p.rho.value(0, 0) = 1e-5;
  p.clamp_temperature();
  CHECK(p.temperature() == kRhoMin);
}
