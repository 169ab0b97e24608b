#pragma once

// Siamese projection of pooled RGB / depth features into a shared embedding
// and the symmetric noise-contrastive loss between the two modalities.

#include <span>
#include <string>

#include "wsod/numkit.hpp"

namespace wsod {

inline constexpr double kRhoMin = 0.01;
inline constexpr double kRhoMax = 1.0;

struct ProjectionParams {
  ParamTensor w_proj;  // d_feat x d_proj, shared by both modalities
  ParamTensor b_proj;  // 1 x d_proj
  ParamTensor rho;     // 1 x 1 temperature

  static ProjectionParams create(std::size_t feat_dim, std::size_t proj_dim, double rho_init);
  ParamList params();
  double temperature() const { return rho.value(0, 0); }
  void clamp_temperature();
};

struct Projection {
  Matrix raw;        // affine output, B x d_proj
  Matrix embedding;  // unit rows
  std::vector<double> norms;
};

// Affine map followed by row-wise L2 normalization. A row whose norm is below
// 1e-12 raises ErrorKind::numeric.
Projection project_with_cache(const Matrix& pooled, const ProjectionParams& params);
Matrix project(const Matrix& pooled, const ProjectionParams& params);

// Accumulates w_proj / b_proj gradients and, if requested, dL/dpooled.
void project_backward(const Matrix& pooled, ProjectionParams& params, const Projection& proj,
                      const Matrix& dembedding, Matrix* dpooled);

double similarity(std::span<const double> a, std::span<const double> b, double rho);

struct NceOptions {
  // Literal form: the positive appears once outside the sum and once inside it.
  bool include_positive_in_sum = false;
};

struct NceResult {
  double loss = 0.0;
  Matrix d_rgb;    // dL / d rgb embedding
  Matrix d_depth;  // dL / d depth embedding
  double d_rho = 0.0;
};

// Average of the RGB->depth and depth->RGB InfoNCE terms over a batch of
// aligned pairs (row b of each matrix belongs to the same image).
NceResult nce(const Matrix& rgb_emb, const Matrix& depth_emb, double rho, const NceOptions& options = {});
double nce_loss(const Matrix& rgb_emb, const Matrix& depth_emb, double rho, const NceOptions& options = {});

}  // namespace wsod
