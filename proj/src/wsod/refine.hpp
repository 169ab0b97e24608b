#pragma once

// Pseudo-box mining for instance-classifier refinement (with an optional depth
// filter on the candidate set), the weighted cross-entropy that trains each
// refinement branch, and depth attention on combined scores.

#include <string>
#include <vector>

#include "wsod/data.hpp"
#include "wsod/numkit.hpp"
#include "wsod/priors.hpp"

namespace wsod {

struct PseudoGroup {
  int class_id = 0;
  int seed = 0;
  double seed_score = 0.0;
  std::vector<int> members;    // includes the seed, ascending
  bool used_fallback = false;  // the depth filter left no candidate
};

struct PseudoBoxSet {
  std::vector<PseudoGroup> groups;
};

struct MiningOptions {
  double iou_thresh = 0.5;
  double score_ratio = 0.5;
};

// For each labeled class: candidates are proposals whose mask entry is 1 (all
// proposals when `mask` is null or the filtered set is empty); the seed is the
// candidate with the highest supervising score (lowest index on ties) and the
// group adds candidates with IoU >= iou_thresh to the seed and score >=
// score_ratio * seed score.
PseudoBoxSet mine(const std::vector<Box>& boxes, const Matrix& scores, const DepthMask* mask,
                  const std::vector<int>& labels, const MiningOptions& options = {});

struct RefineTargets {
  std::vector<int> target;     // class id, or C for background
  std::vector<double> weight;
};

// Proposal i takes the class of the seed it overlaps most when that IoU is at
// least iou_thresh (ties go to the lower class id), else background. Weights
// are the supervising score of the matched (or, for background, the nearest)
// seed; 1.0 when there are no seeds.
RefineTargets refinement_targets(const std::vector<Box>& boxes, const PseudoBoxSet& pseudo,
                                 std::size_t num_classes, double iou_thresh = 0.5);

struct RefineBranch {
  ParamTensor w;  // d_feat x (C + 1)
  ParamTensor b;  // 1 x (C + 1)

  static RefineBranch zeros(std::size_t index, std::size_t feat_dim, std::size_t num_classes);
  ParamList params() { return {&w, &b}; }
};

// -(1/R) sum_i w_i log q_i[target_i] with q the row softmax of `branch_scores`.
// When `dscores` is given it receives dL/dbranch_scores.
double refinement_loss(const Matrix& branch_scores, const RefineTargets& targets, Matrix* dscores = nullptr);

// Full branch step on features: scores, loss, and gradient accumulation into
// the branch parameters (and optionally dL/dfeatures).
double refinement_loss(const Matrix& features, RefineBranch& branch, const RefineTargets& targets,
                       Matrix* dfeatures);

// Multiplier per entry: `factor` where the mask is 0 for a defined class, 1
// elsewhere.
Matrix attention_weights(const DepthMask& mask, double factor = 0.5);
Matrix depth_attention(const Matrix& p_comb, const DepthMask& mask, double factor = 0.5);

struct MiningTally {
  std::size_t pseudo_boxes = 0;
  std::size_t correct = 0;  // IoU >= 0.5 with a GT box of the group's class

  double precision() const {
    return pseudo_boxes ? static_cast<double>(correct) / static_cast<double>(pseudo_boxes) : 0.0;
  }
  void merge(const MiningTally& o) {
    pseudo_boxes += o.pseudo_boxes;
    correct += o.correct;
  }
};

MiningTally mining_tally(const PseudoBoxSet& pseudo, const ImageRecord& record);

}  // namespace wsod
