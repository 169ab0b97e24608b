#include "wsod/fusion.hpp"

#include <cmath>

#include "wsod/error.hpp"
#include "wsod/rng.hpp"

namespace wsod {

std::optional<FusionMode> parse_fusion_mode(std::string_view s) {
  if (s == "rgb" || s == "rgb_only") return FusionMode::rgb_only;
  if (s == "fused") return FusionMode::fused;
  if (s == "depth" || s == "depth_only") return FusionMode::depth_only;
  return std::nullopt;
}

const char* fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::rgb_only: return "rgb";
    case FusionMode::fused: return "fused";
    case FusionMode::depth_only: return "depth";
  }
  return "rgb";
}

RawScores fuse(const RawScores& rgb, const RawScores& depth) {
  require_same_shape(rgb.det, depth.det, "fuse det");
  require_same_shape(rgb.cls, depth.cls, "fuse cls");
  RawScores out = rgb;
  out.det += depth.det;
  out.cls += depth.cls;
  return out;
}

namespace {

void randomize(Matrix& m, Rng& rng, double std) {
  for (double& v : m.data()) v = std * rng.normal();
}

}  // namespace

ModelParams ModelParams::create(const ModelDims& dims, std::uint64_t seed, double rho_init, double init_std) {
  if (dims.feat_dim == 0 || dims.num_classes == 0 || dims.proj_dim == 0)
    fail(ErrorKind::config, "model dimensions must be positive");
  ModelParams p{
      ParamTensor("trunk.w", Matrix::identity(dims.feat_dim)),
      ParamTensor("trunk.b", Matrix(1, dims.feat_dim)),
      HeadParams::zeros("rgb", dims.feat_dim, dims.num_classes),
      HeadParams::zeros("depth", dims.feat_dim, dims.num_classes),
      ProjectionParams::create(dims.feat_dim, dims.proj_dim, rho_init),
      {},
  };
  for (std::size_t k = 0; k < dims.branches; ++k)
    p.branches.push_back(RefineBranch::zeros(k, dims.feat_dim, dims.num_classes));

  Rng rng(seed);
  randomize(p.rgb.w_det.value, rng, init_std);
  randomize(p.rgb.w_cls.value, rng, init_std);
  randomize(p.depth.w_det.value, rng, init_std);
  randomize(p.depth.w_cls.value, rng, init_std);
  // Projection starts at unit-variance scale so embeddings are well spread.
  randomize(p.proj.w_proj.value, rng, 1.0 / std::sqrt(static_cast<double>(dims.feat_dim)));
  for (RefineBranch& b : p.branches) randomize(b.w.value, rng, init_std);
  p.proj.clamp_temperature();
  return p;
}

ModelParams ModelParams::from_checkpoint(const std::map<std::string, Matrix>& tensors) {
  const auto get = [&](const std::string& name) -> const Matrix& {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::checkpoint, "checkpoint is missing tensor " + name);
    return it->second;
  };
  const Matrix& tw = get("trunk.w");
  const Matrix& rdw = get("rgb.det.w");
  const Matrix& pw = get("proj.w");
  ModelDims dims{tw.rows(), rdw.cols(), pw.cols(), 0};
  while (tensors.count("refine" + std::to_string(dims.branches) + ".w")) ++dims.branches;
  ModelParams p = create(dims, 0);
  for (ParamTensor* t : p.params()) {
    const Matrix& m = get(t->name);
    if (!m.same_shape(t->value))
      fail(ErrorKind::checkpoint, "checkpoint tensor " + t->name + " has an inconsistent shape");
    t->value = m;
  }
  return p;
}

ParamList ModelParams::params() {
  ParamList out{&trunk_w, &trunk_b};
  for (ParamTensor* t : rgb.params()) out.push_back(t);
  for (ParamTensor* t : depth.params()) out.push_back(t);
  for (ParamTensor* t : proj.params()) out.push_back(t);
  for (RefineBranch& b : branches)
    for (ParamTensor* t : b.params()) out.push_back(t);
  return out;
}

ModelDims ModelParams::dims() const {
  return ModelDims{trunk_w.value.rows(), rgb.w_det.value.cols(), proj.w_proj.value.cols(), branches.size()};
}

Matrix trunk_forward(const ModelParams& params, const Matrix& features) {
  return affine(features, params.trunk_w.value, params.trunk_b.value);
}

ScorePack forward(const ImageRecord& record, const ModelParams& params, FusionMode mode, bool sigma_on_sum) {
  const ModelDims dims = params.dims();
  if (record.rgb_features.cols() != dims.feat_dim)
    fail(ErrorKind::checkpoint, "image " + record.image_id + ": feature dimension " +
                                    std::to_string(record.rgb_features.cols()) + " does not match model " +
                                    std::to_string(dims.feat_dim));
  RawScores s;
  if (mode == FusionMode::depth_only) {
    s = score(trunk_forward(params, record.depth_features), params.depth);
  } else {
    s = score(trunk_forward(params, record.rgb_features), params.rgb);
    if (mode == FusionMode::fused) s = fuse(s, score(trunk_forward(params, record.depth_features), params.depth));
  }
  ScorePack pack = probabilities(s.det, s.cls);
  pack.p_hat = image_prediction(pack.p_comb, sigma_on_sum);
  return pack;
}

}  // namespace wsod
