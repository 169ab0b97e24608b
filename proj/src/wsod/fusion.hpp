#pragma once

// Late fusion of RGB and depth score matrices, the full model parameter set,
// and the inference forward pass.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wsod/contrastive.hpp"
#include "wsod/data.hpp"
#include "wsod/milhead.hpp"
#include "wsod/refine.hpp"

namespace wsod {

enum class FusionMode { rgb_only, fused, depth_only };

std::optional<FusionMode> parse_fusion_mode(std::string_view s);  // rgb | fused | depth
const char* fusion_mode_name(FusionMode mode);

// Elementwise sum of detection and classification scores.
RawScores fuse(const RawScores& rgb, const RawScores& depth);

struct ModelDims {
  std::size_t feat_dim = 0;
  std::size_t num_classes = 0;
  std::size_t proj_dim = 32;
  std::size_t branches = 1;
};

// Every learnable tensor. Both modalities pass through the same shared trunk
// (a linear box-feature layer, the Siamese counterpart of a shared backbone)
// before their modality-specific heads; the projection and refinement
// branches read the trunk output as well.
struct ModelParams {
  ParamTensor trunk_w;  // d_feat x d_feat
  ParamTensor trunk_b;  // 1 x d_feat
  HeadParams rgb;
  HeadParams depth;
  ProjectionParams proj;
  std::vector<RefineBranch> branches;

  // Trunk = identity; heads, projection and branches ~ N(0, init_std^2) drawn
  // in a fixed order from `seed`.
  static ModelParams create(const ModelDims& dims, std::uint64_t seed, double rho_init = 0.1,
                            double init_std = 0.01);
  // Restores a model from checkpoint tensors; dims are taken from the shapes.
  static ModelParams from_checkpoint(const std::map<std::string, Matrix>& tensors);

  ParamList params();
  ModelDims dims() const;
};

Matrix trunk_forward(const ModelParams& params, const Matrix& features);

// Scores under a mode: rgb_only uses only the RGB head, depth_only only the
// depth head, fused sums both (pre-softmax). p_hat follows sigma_on_sum.
ScorePack forward(const ImageRecord& record, const ModelParams& params, FusionMode mode,
                  bool sigma_on_sum = true);

}  // namespace wsod
