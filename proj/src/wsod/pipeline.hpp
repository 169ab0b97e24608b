#pragma once

// Training objective, training loop, inference and the ablation sweep.

#include <optional>
#include <string>
#include <vector>

#include "wsod/config.hpp"
#include "wsod/data.hpp"
#include "wsod/evald.hpp"
#include "wsod/fusion.hpp"
#include "wsod/priors.hpp"
#include "wsod/refine.hpp"

namespace wsod {

// Switches resolved from a RunConfig for one objective evaluation.
struct ObjectiveOptions {
  bool fusion = false;
  bool nce = false;
  bool depth_oicr = false;
  bool depth_attention = false;
  bool refine = true;
  bool sigma_on_sum = true;
  double w_mil = 1.0;
  double w_nce = 1.0;
  double w_ref = 1.0;
  double attention_factor = 0.5;
  MiningOptions mining;
  double refine_iou_thresh = 0.5;
  NceOptions nce_options;

  static ObjectiveOptions from_config(const RunConfig& config);
};

// One training example: a record, its image-level labels, and (when priors are
// in use) its depth mask.
struct TrainItem {
  const ImageRecord* record = nullptr;
  std::vector<int> labels;
  std::optional<DepthMask> mask;
};

struct BatchLoss {
  double mil = 0.0;     // mean over images
  double nce = 0.0;     // zero when disabled or the batch has one image
  double refine = 0.0;  // mean over images, summed over branches
  double total = 0.0;   // w_mil * mil + w_nce * nce + w_ref * refine
  MiningTally tally;    // first refinement branch
};

// Evaluates the composed loss on a batch. With `backward` set, gradients of
// `total` are accumulated into the parameters' grad fields.
BatchLoss batch_objective(ModelParams& model, const std::vector<const TrainItem*>& batch,
                          const ObjectiveOptions& options, bool backward);

struct EpochStats {
  double mil = 0.0;
  double nce = 0.0;
  double refine = 0.0;
  double total = 0.0;
  double mining_precision = 0.0;
  std::size_t pseudo_boxes = 0;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string config_json;
  std::vector<EpochStats> epochs;
  std::size_t train_images = 0;
  std::size_t skipped_unlabeled = 0;
  std::optional<EvalReport> eval;
  std::optional<double> wall_seconds;

  std::string to_json(const ClassVocabulary* vocab = nullptr) const;
};

struct TrainResult {
  ModelParams model;
  RunReport report;
};

// Image-level labels under the configured source: `gt` uses the record's
// labels (or the classes of its GT boxes), `extracted` matches the caption.
std::vector<int> training_labels(const ImageRecord& record, const ClassVocabulary& vocab,
                                 LabelSource source);

// Visit order of `n` training items for each epoch: one shuffle per epoch from
// a stream seeded by `seed`.
std::vector<std::vector<std::size_t>> epoch_orders(std::size_t n, int epochs, std::uint64_t seed);

// Trains from scratch. Priors are required when depth_oicr or depth_attention
// is on (ErrorKind::config otherwise). When `eval_set` is given the final model
// is evaluated on it with the configured inference mode.
TrainResult train(const RunConfig& config, const Dataset& dataset, const ClassVocabulary& vocab,
                  const FrozenPriors* priors = nullptr, const Dataset* eval_set = nullptr);

// Every (proposal, class) pair with confidence = p_comb under `mode` above
// min_score, before NMS.
std::vector<Detection> raw_detections(const ModelParams& model, const Dataset& dataset, FusionMode mode,
                                      double min_score, bool sigma_on_sum = true);

// Detections with confidence = p_comb under `mode`, kept when confidence >
// min_score, after class-wise NMS at `nms_thresh`.
std::vector<Detection> infer(const ModelParams& model, const Dataset& dataset, FusionMode mode,
                             double min_score, double nms_thresh, bool sigma_on_sum = true);

struct AblationRow {
  std::string name;
  EvalReport eval;
  double mining_precision = 0.0;
  double final_loss = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::optional<PriorEstimate> estimated_priors;  // set when priors were derived here

  std::string to_json() const;
  std::string table() const;  // percentages
};

// Row names in table order.
std::vector<std::string> ablation_row_names();
RunConfig ablation_config(const RunConfig& base, const std::string& row);

// Trains the baseline and the five toggle sets with the same seed and
// evaluates each on `eval_set`. Without `priors`, priors are estimated from the
// baseline's predictions on the training set.
AblationResult run_ablation(const RunConfig& config, const Dataset& dataset, const ClassVocabulary& vocab,
                            const Dataset& eval_set, const FrozenPriors* priors = nullptr);

void save_model(const std::string& path, ModelParams& model);
ModelParams load_model(const std::string& path);

}  // namespace wsod
