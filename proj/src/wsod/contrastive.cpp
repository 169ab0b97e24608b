#include "wsod/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "wsod/error.hpp"

namespace wsod {

ProjectionParams ProjectionParams::create(std::size_t feat_dim, std::size_t proj_dim, double rho_init) {
  return ProjectionParams{ParamTensor("proj.w", Matrix(feat_dim, proj_dim)),
                          ParamTensor("proj.b", Matrix(1, proj_dim)),
                          ParamTensor("proj.rho", Matrix(1, 1, rho_init))};
}

ParamList ProjectionParams::params() { return {&w_proj, &b_proj, &rho}; }

void ProjectionParams::clamp_temperature() {
  rho.value(0, 0) = std::clamp(rho.value(0, 0), kRhoMin, kRhoMax);
}

Projection project_with_cache(const Matrix& pooled, const ProjectionParams& params) {
  Projection p;
  p.raw = affine(pooled, params.w_proj.value, params.b_proj.value);
  p.embedding = p.raw;
  for (std::size_t i = 0; i < p.raw.rows(); ++i) {
    double sq = 0.0;
    for (double v : p.raw.row_span(i)) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) fail(ErrorKind::numeric, "projection: zero-norm row " + std::to_string(i));
    for (double& v : p.embedding.row_span(i)) v /= norm;
    p.norms.push_back(norm);
  }
  return p;
}

Matrix project(const Matrix& pooled, const ProjectionParams& params) {
  return project_with_cache(pooled, params).embedding;
}

void project_backward(const Matrix& pooled, ProjectionParams& params, const Projection& proj,
                      const Matrix& dembedding, Matrix* dpooled) {
  require_same_shape(proj.embedding, dembedding, "project_backward");
  Matrix draw(dembedding.rows(), dembedding.cols());
  for (std::size_t i = 0; i < draw.rows(); ++i) {
    const auto e = proj.embedding.row_span(i);
    const auto de = dembedding.row_span(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) dot += e[k] * de[k];
    for (std::size_t k = 0; k < e.size(); ++k) draw(i, k) = (de[k] - e[k] * dot) / proj.norms[i];
  }
  affine_backward(pooled, params.w_proj.value, draw, dpooled, &params.w_proj.grad, &params.b_proj.grad);
}

double similarity(std::span<const double> a, std::span<const double> b, double rho) {
  if (a.size() != b.size()) fail(ErrorKind::shape, "similarity: dimension mismatch");
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot / rho;
}

namespace {

// One direction: for each anchor row i of `s`, -log(e^{s_ii} / den_i). Adds
// dL/ds (already scaled by `scale`) into ds and returns the summed loss.
double directional_nce(const Matrix& s, bool include_positive, double scale, Matrix& ds) {
  const std::size_t B = s.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < B; ++j) mx = std::max(mx, s(i, j));
    // Each term's multiplicity in the denominator.
    std::vector<double> weight(B);
    double den = 0.0;
    for (std::size_t j = 0; j < B; ++j) {
      const double mult = (include_positive && j == i) ? 2.0 : 1.0;
      weight[j] = mult * std::exp(s(i, j) - mx);
      den += weight[j];
    }
    total += -(s(i, i) - mx) + std::log(den);
    for (std::size_t j = 0; j < B; ++j) ds(i, j) += scale * (weight[j] / den - (j == i ? 1.0 : 0.0));
  }
  return total;
}

}  // namespace

NceResult nce(const Matrix& rgb_emb, const Matrix& depth_emb, double rho, const NceOptions& options) {
  require_same_shape(rgb_emb, depth_emb, "nce");
  const std::size_t B = rgb_emb.rows();
  if (B == 0) fail(ErrorKind::shape, "nce: empty batch");
  if (!(rho > 0)) fail(ErrorKind::numeric, "nce: temperature must be positive");
  Matrix s(B, B);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) s(i, j) = similarity(rgb_emb.row_span(i), depth_emb.row_span(j), rho);

  const double scale = 0.5 / static_cast<double>(B);
  // RGB anchor i against depth candidates j: rows of s.
  Matrix ds(B, B);
  const double rgb_anchor = directional_nce(s, options.include_positive_in_sum, scale, ds);
  // Depth anchor j against RGB candidates i: rows of s^T.
  Matrix st(B, B), dst(B, B);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) st(i, j) = s(j, i);
  const double depth_anchor = directional_nce(st, options.include_positive_in_sum, scale, dst);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) ds(i, j) += dst(j, i);

  NceResult r;
  r.loss = scale * (rgb_anchor + depth_anchor);
  r.d_rgb = Matrix(B, rgb_emb.cols());
  r.d_depth = Matrix(B, rgb_emb.cols());
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      const double g = ds(i, j) / rho;
      for (std::size_t k = 0; k < rgb_emb.cols(); ++k) {
        r.d_rgb(i, k) += g * depth_emb(j, k);
        r.d_depth(j, k) += g * rgb_emb(i, k);
      }
      r.d_rho -= ds(i, j) * s(i, j) / rho;
    }
  return r;
}

double nce_loss(const Matrix& rgb_emb, const Matrix& depth_emb, double rho, const NceOptions& options) {
  return nce(rgb_emb, depth_emb, rho, options).loss;
}

}  // namespace wsod
