#pragma once

// WSDDN-style multiple-instance detection head: per-class detection and
// classification scores over proposals, the probability chain that turns them
// into image-level predictions, and the image-level binary cross-entropy.

#include <string>
#include <vector>

#include "wsod/numkit.hpp"

namespace wsod {

struct HeadParams {
  ParamTensor w_det;  // d_feat x C
  ParamTensor b_det;  // 1 x C
  ParamTensor w_cls;  // d_feat x C
  ParamTensor b_cls;  // 1 x C

  static HeadParams zeros(const std::string& prefix, std::size_t feat_dim, std::size_t num_classes);
  ParamList params();
  std::size_t feat_dim() const { return w_det.value.rows(); }
  std::size_t num_classes() const { return w_det.value.cols(); }
};

struct RawScores {
  Matrix det;  // R x C
  Matrix cls;  // R x C
};

RawScores score(const Matrix& features, const HeadParams& head);

// Accumulates head gradients for upstream dL/d(det, cls); optionally the
// gradient with respect to the features.
void score_backward(const Matrix& features, HeadParams& head, const RawScores& upstream,
                    Matrix* dfeatures);

struct ScorePack {
  Matrix det_scores;
  Matrix cls_scores;
  Matrix p_det;   // softmax over proposals, per class
  Matrix p_cls;   // softmax over classes, per proposal
  Matrix p_comb;  // p_det * p_cls
  std::vector<double> p_hat;
};

// Fills everything except p_hat.
ScorePack probabilities(const Matrix& det_scores, const Matrix& cls_scores);

// p_hat[c] = sigmoid(sum_i p_comb[i, c]) when sigma_on_sum; otherwise the raw
// sum (clamped only inside the loss).
std::vector<double> image_prediction(const Matrix& p_comb, bool sigma_on_sum = true);

// -sum_c [y_c log p_c + (1 - y_c) log(1 - p_c)], probabilities clamped to
// [1e-7, 1 - 1e-7].
double mil_loss(const std::vector<double>& p_hat, const std::vector<int>& labels);

std::vector<double> mil_loss_backward(const std::vector<double>& p_hat, const std::vector<int>& labels);
Matrix image_prediction_backward(const Matrix& p_comb, const std::vector<double>& dp_hat,
                                 bool sigma_on_sum = true);
RawScores probabilities_backward(const ScorePack& pack, const Matrix& dp_comb);

}  // namespace wsod
