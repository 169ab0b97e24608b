#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsod/evald.hpp"
#include "wsod/fusion.hpp"
#include "wsod/synthetic.hpp"

namespace wsod {

enum class LabelSource { gt, extracted };

// Every knob of a run. Keys are dotted paths ("train.epochs"); a JSON config
// file uses the nested form ({"train": {"epochs": 30}}).
struct RunConfig {
  std::uint64_t seed = 0;

  int epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  int batch_images = 8;  // images per optimizer step; also the contrastive batch

  double w_mil = 1.0;
  double w_nce = 1.0;
  double w_ref = 1.0;

  bool siamese_nce = false;
  bool fusion = false;
  bool depth_oicr = false;
  bool depth_attention = false;

  double prior_score_threshold = 0.5;
  std::size_t prior_min_count_word = 2;
  std::size_t prior_min_count_class = 1;
  bool prior_use_captions = true;

  int refine_branches = 1;
  double refine_iou_thresh = 0.5;
  double refine_score_ratio = 0.5;
  double attention_factor = 0.5;

  bool sigma_on_sum = true;
  bool nce_include_positive_in_sum = false;
  std::size_t proj_dim = 32;
  double rho_init = 0.1;
  double init_std = 0.01;

  LabelSource label_source = LabelSource::gt;

  FusionMode infer_mode = FusionMode::rgb_only;
  double infer_min_score = 0.0;

  EvalConfig eval;
  SyntheticConfig synthetic;

  bool report_timing = false;

  // Throws ErrorKind::config for unknown keys or unparsable values. `value`
  // is JSON text when it parses as JSON, otherwise a bare string.
  void set(const std::string& key, const std::string& value);
  void merge_json(const std::string& json_text);
  std::string to_json() const;  // nested echo of every key
  void validate() const;

  bool needs_priors() const { return depth_oicr || depth_attention; }

  static std::vector<std::string> keys();
  static RunConfig from_file(const std::string& path);
};

}  // namespace wsod
