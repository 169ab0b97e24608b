#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsod/data.hpp"

namespace wsod {

// Stand-in for a backbone plus a monocular depth network: emits proposals with
// precomputed RGB/depth features and proposal depths.
//
// Per object of class c the generator emits "true object" proposals (IoU >= 0.6
// with the ground-truth box) whose RGB and depth features carry the class
// prototype and whose depth lies in the sub-band selected by the caption's
// context word. It also emits "context" distractors: proposals away from the
// object whose RGB features carry a class-correlated context prototype but
// whose depth features do not, placed outside the class band with probability
// `distractor_out_of_band`. Remaining proposals are background noise.
struct SyntheticConfig {
  int num_classes = 3;
  int num_images = 100;
  int proposals_per_image = 10;
  int feat_dim = 16;
  int image_width = 320;
  int image_height = 240;
  int max_objects = 2;
  int true_proposals_per_object = 2;
  int context_proposals_per_object = 2;

  // Per-class depth band; empty means evenly spaced defaults.
  std::vector<std::pair<double, double>> depth_bands;
  // Per-class context words; word k of K selects the k-th equal slice of the
  // class band. Empty means generated defaults.
  std::vector<std::vector<std::string>> context_words;

  double signal_strength = 1.0;
  double context_strength = 1.0;
  double depth_signal_strength = 1.0;
  double noise = 0.5;                    // feature noise std; depth jitter = 0.05 * noise
  double distractor_out_of_band = 0.8;
  double caption_noise = 0.0;            // probability a caption misreports one class
  // Seeds the class prototypes. Datasets drawn with different sample seeds but
  // the same world seed share one appearance model (train / test splits).
  std::uint64_t world_seed = 0;
};

struct SyntheticStats {
  std::size_t true_proposals = 0;
  std::size_t true_in_band = 0;
};

struct SyntheticDataset {
  ClassVocabulary vocab;
  Dataset records;
  SyntheticStats stats;
  std::vector<std::pair<double, double>> depth_bands;
};

// Fills default bands/context words and validates. Throws ErrorKind::config on
// invalid values (R < 2, empty band, ...).
SyntheticConfig resolve_synthetic_config(SyntheticConfig config);

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Default class names used by the generator (bird, dog, car, ...), padded
// with "classK" tokens beyond the built-in list.
ClassVocabulary synthetic_vocabulary(int num_classes);

}  // namespace wsod
