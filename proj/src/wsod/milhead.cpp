#include "wsod/milhead.hpp"

#include <cmath>

#include "wsod/error.hpp"

namespace wsod {

HeadParams HeadParams::zeros(const std::string& prefix, std::size_t feat_dim, std::size_t num_classes) {
  return HeadParams{
      ParamTensor(prefix + ".det.w", Matrix(feat_dim, num_classes)),
      ParamTensor(prefix + ".det.b", Matrix(1, num_classes)),
      ParamTensor(prefix + ".cls.w", Matrix(feat_dim, num_classes)),
      ParamTensor(prefix + ".cls.b", Matrix(1, num_classes)),
  };
}

ParamList HeadParams::params() { return {&w_det, &b_det, &w_cls, &b_cls}; }

RawScores score(const Matrix& features, const HeadParams& head) {
  return RawScores{affine(features, head.w_det.value, head.b_det.value),
                   affine(features, head.w_cls.value, head.b_cls.value)};
}

void score_backward(const Matrix& features, HeadParams& head, const RawScores& upstream,
                    Matrix* dfeatures) {
  affine_backward(features, head.w_det.value, upstream.det, dfeatures, &head.w_det.grad, &head.b_det.grad);
  affine_backward(features, head.w_cls.value, upstream.cls, dfeatures, &head.w_cls.grad, &head.b_cls.grad);
}

ScorePack probabilities(const Matrix& det_scores, const Matrix& cls_scores) {
  require_same_shape(det_scores, cls_scores, "probabilities");
  ScorePack pack;
  pack.det_scores = det_scores;
  pack.cls_scores = cls_scores;
  pack.p_det = softmax_cols(det_scores);
  pack.p_cls = softmax_rows(cls_scores);
  pack.p_comb = Matrix(det_scores.rows(), det_scores.cols());
  for (std::size_t k = 0; k < pack.p_comb.size(); ++k)
    pack.p_comb.data()[k] = pack.p_det.data()[k] * pack.p_cls.data()[k];
  return pack;
}

std::vector<double> image_prediction(const Matrix& p_comb, bool sigma_on_sum) {
  const Matrix sums = column_sums(p_comb);
  std::vector<double> out(sums.data());
  if (sigma_on_sum)
    for (double& v : out) v = sigmoid(v);
  return out;
}

namespace {

std::vector<double> targets(std::size_t num_classes, const std::vector<int>& labels) {
  std::vector<double> y(num_classes, 0.0);
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
      fail(ErrorKind::data, "label " + std::to_string(c) + " outside [0, C)");
    y[c] = 1.0;
  }
  return y;
}

}  // namespace

double mil_loss(const std::vector<double>& p_hat, const std::vector<int>& labels) {
  const auto y = targets(p_hat.size(), labels);
  double loss = 0.0;
  for (std::size_t c = 0; c < p_hat.size(); ++c) {
    const double p = clamp_prob(p_hat[c]);
    loss -= y[c] * std::log(p) + (1.0 - y[c]) * std::log(1.0 - p);
  }
  return loss;
}

std::vector<double> mil_loss_backward(const std::vector<double>& p_hat, const std::vector<int>& labels) {
  const auto y = targets(p_hat.size(), labels);
  std::vector<double> g(p_hat.size(), 0.0);
  for (std::size_t c = 0; c < p_hat.size(); ++c) {
    const double p = p_hat[c];
    if (p < kProbClamp || p > 1.0 - kProbClamp) continue;  // clamped: flat
    g[c] = -y[c] / p + (1.0 - y[c]) / (1.0 - p);
  }
  return g;
}

Matrix image_prediction_backward(const Matrix& p_comb, const std::vector<double>& dp_hat, bool sigma_on_sum) {
  if (dp_hat.size() != p_comb.cols()) fail(ErrorKind::shape, "image_prediction_backward: class count mismatch");
  std::vector<double> dsum(dp_hat);
  if (sigma_on_sum) {
    const Matrix sums = column_sums(p_comb);
    for (std::size_t c = 0; c < dsum.size(); ++c) {
      const double s = sigmoid(sums(0, c));
      dsum[c] *= s * (1.0 - s);
    }
  }
  Matrix d(p_comb.rows(), p_comb.cols());
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t c = 0; c < d.cols(); ++c) d(i, c) = dsum[c];
  return d;
}

RawScores probabilities_backward(const ScorePack& pack, const Matrix& dp_comb) {
  require_same_shape(pack.p_comb, dp_comb, "probabilities_backward");
  Matrix dp_det(dp_comb.rows(), dp_comb.cols());
  Matrix dp_cls(dp_comb.rows(), dp_comb.cols());
  for (std::size_t k = 0; k < dp_comb.size(); ++k) {
    dp_det.data()[k] = dp_comb.data()[k] * pack.p_cls.data()[k];
    dp_cls.data()[k] = dp_comb.data()[k] * pack.p_det.data()[k];
  }
  return RawScores{softmax_cols_backward(pack.p_det, dp_det), softmax_rows_backward(pack.p_cls, dp_cls)};
}

}  // namespace wsod
