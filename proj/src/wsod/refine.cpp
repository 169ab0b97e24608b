#include "wsod/refine.hpp"

#include <algorithm>
#include <cmath>

#include "wsod/error.hpp"
#include "wsod/evald.hpp"

namespace wsod {

PseudoBoxSet mine(const std::vector<Box>& boxes, const Matrix& scores, const DepthMask* mask,
                  const std::vector<int>& labels, const MiningOptions& options) {
  const std::size_t R = boxes.size();
  if (scores.rows() != R) fail(ErrorKind::shape, "mine: score rows do not match proposals");
  if (mask && (mask->m.rows() != R || mask->m.cols() != scores.cols()))
    fail(ErrorKind::shape, "mine: mask shape does not match scores");
  PseudoBoxSet out;
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= scores.cols()) fail(ErrorKind::data, "mine: label outside [0, C)");
    std::vector<int> candidates;
    for (std::size_t i = 0; i < R; ++i)
      if (!mask || mask->m(i, c) != 0.0) candidates.push_back(static_cast<int>(i));
    PseudoGroup g;
    g.class_id = c;
    if (candidates.empty()) {
      g.used_fallback = true;
      for (std::size_t i = 0; i < R; ++i) candidates.push_back(static_cast<int>(i));
    }
    g.seed = candidates.front();
    for (int i : candidates)
      if (scores(i, c) > scores(g.seed, c)) g.seed = i;
    g.seed_score = scores(g.seed, c);
    for (int i : candidates) {
      if (i == g.seed) {
        g.members.push_back(i);
        continue;
      }
      if (iou(boxes[i], boxes[g.seed]) >= options.iou_thresh && scores(i, c) >= options.score_ratio * g.seed_score)
        g.members.push_back(i);
    }
    out.groups.push_back(std::move(g));
  }
  return out;
}

RefineTargets refinement_targets(const std::vector<Box>& boxes, const PseudoBoxSet& pseudo,
                                 std::size_t num_classes, double iou_thresh) {
  RefineTargets t;
  const int background = static_cast<int>(num_classes);
  for (const Box& box : boxes) {
    if (pseudo.groups.empty()) {
      t.target.push_back(background);
      t.weight.push_back(1.0);
      continue;
    }
    // Highest-IoU seed; groups are visited in ascending class order so a tie
    // keeps the lower class id.
    std::vector<const PseudoGroup*> order;
    for (const PseudoGroup& g : pseudo.groups) order.push_back(&g);
    std::stable_sort(order.begin(), order.end(),
                     [](const PseudoGroup* a, const PseudoGroup* b) { return a->class_id < b->class_id; });
    const PseudoGroup* best = order.front();
    double best_iou = -1.0;
    for (const PseudoGroup* g : order) {
      const double o = iou(box, boxes[g->seed]);
      if (o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    t.target.push_back(best_iou >= iou_thresh ? best->class_id : background);
    t.weight.push_back(best->seed_score);
  }
  return t;
}

RefineBranch RefineBranch::zeros(std::size_t index, std::size_t feat_dim, std::size_t num_classes) {
  const std::string prefix = "refine" + std::to_string(index);
  return RefineBranch{ParamTensor(prefix + ".w", Matrix(feat_dim, num_classes + 1)),
                      ParamTensor(prefix + ".b", Matrix(1, num_classes + 1))};
}

double refinement_loss(const Matrix& branch_scores, const RefineTargets& targets, Matrix* dscores) {
  const std::size_t R = branch_scores.rows();
  if (targets.target.size() != R || targets.weight.size() != R)
    fail(ErrorKind::shape, "refinement_loss: targets do not match proposals");
  const Matrix q = softmax_rows(branch_scores);
  if (dscores) *dscores = Matrix(R, branch_scores.cols());
  double loss = 0.0;
  const double inv_r = 1.0 / static_cast<double>(R);
  for (std::size_t i = 0; i < R; ++i) {
    const auto t = static_cast<std::size_t>(targets.target[i]);
    if (t >= branch_scores.cols()) fail(ErrorKind::shape, "refinement_loss: target outside [0, C]");
    const double w = targets.weight[i];
    const double p = q(i, t);
    loss -= w * std::log(std::max(p, kProbClamp));
    if (dscores && p >= kProbClamp) {
      for (std::size_t k = 0; k < q.cols(); ++k)
        (*dscores)(i, k) = w * inv_r * (q(i, k) - (k == t ? 1.0 : 0.0));
    }
  }
  return loss * inv_r;
}

double refinement_loss(const Matrix& features, RefineBranch& branch, const RefineTargets& targets,
                       Matrix* dfeatures) {
  const Matrix scores = affine(features, branch.w.value, branch.b.value);
  Matrix dscores;
  const double loss = refinement_loss(scores, targets, &dscores);
  affine_backward(features, branch.w.value, dscores, dfeatures, &branch.w.grad, &branch.b.grad);
  return loss;
}

Matrix attention_weights(const DepthMask& mask, double factor) {
  Matrix w(mask.m.rows(), mask.m.cols(), 1.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.cols(); ++c)
      if (mask.defined[c] && mask.m(i, c) == 0.0) w(i, c) = factor;
  return w;
}

Matrix depth_attention(const Matrix& p_comb, const DepthMask& mask, double factor) {
  require_same_shape(p_comb, mask.m, "depth_attention");
  const Matrix w = attention_weights(mask, factor);
  Matrix out = p_comb;
  for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= w.data()[k];
  return out;
}

MiningTally mining_tally(const PseudoBoxSet& pseudo, const ImageRecord& record) {
  MiningTally t;
  for (const PseudoGroup& g : pseudo.groups)
    for (int i : g.members) {
      ++t.pseudo_boxes;
      if (!record.gt_boxes) continue;
      for (const GtBox& gt : *record.gt_boxes)
        if (gt.class_id == g.class_id && iou(record.proposals[i], gt.box) >= 0.5) {
          ++t.correct;
          break;
        }
    }
  return t;
}

}  // namespace wsod
