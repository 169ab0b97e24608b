#pragma once

// Depth priors: streaming depth statistics of confident box predictions keyed
// by class and by (class, caption word), frozen into [mean - std, mean + std]
// ranges, combined per image from the caption, and turned into a per-proposal
// depth mask.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsod/data.hpp"
#include "wsod/evald.hpp"

namespace wsod {

// Welford accumulator; merge uses the pairwise (Chan) update.
struct RunningMoments {
  std::size_t count = 0;
  double mu = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mu;
    mu += delta / static_cast<double>(count);
    m2 += delta * (x - mu);
  }
  void merge(const RunningMoments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(count + o.count);
    const double delta = o.mu - mu;
    mu += delta * static_cast<double>(o.count) / n;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
  }
  double mean() const { return mu; }
  // Population standard deviation.
  double stddev() const;
};

struct DepthRange {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double d) const { return d >= lo && d <= hi; }
  friend bool operator==(const DepthRange&, const DepthRange&) = default;
};

std::optional<DepthRange> freeze_range(const RunningMoments& m, std::size_t min_count);

struct PriorStats {
  std::map<std::pair<int, std::string>, RunningMoments> by_class_word;
  std::map<int, RunningMoments> by_class;
  std::size_t min_count_word = 2;
  std::size_t min_count_class = 1;
  std::size_t skipped = 0;  // predictions rejected for an unusable box

  void merge(const PriorStats& o);
};

struct PriorPrediction {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

// Depth of a predicted box: the stored proposal depth when the box is one of
// the record's proposals, otherwise the mean over the sidecar depth map.
std::optional<double> box_depth(const ImageRecord& record, const Box& box);

// Adds one prediction when score > score_threshold: once to the class moments
// and once per distinct caption token to the (class, word) moments. Boxes
// outside the image or without a depth source increment `skipped`.
void accumulate(PriorStats& stats, const PriorPrediction& prediction, const ImageRecord& record,
                double score_threshold);

struct MomentSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;

  DepthRange range() const { return {mean - std, mean + std}; }
};

// Frozen priors as stored on disk (count / mean / std per key).
struct FrozenPriors {
  std::size_t min_count_word = 2;
  std::size_t min_count_class = 1;
  std::map<int, MomentSummary> by_class;
  std::map<std::pair<int, std::string>, MomentSummary> by_class_word;

  std::optional<DepthRange> class_range(int class_id) const;
  std::optional<DepthRange> word_range(int class_id, const std::string& word) const;
};

FrozenPriors freeze(const PriorStats& stats);

// Averages the word ranges of the caption's distinct tokens that have one for
// this class; falls back to the class range when none do (or when there is no
// caption), and to none when the class has no range either.
std::optional<DepthRange> image_range(const FrozenPriors& priors, int class_id,
                                      const std::optional<std::string>& caption);

struct DepthMask {
  Matrix m;                  // R x C, entries 0 or 1
  std::vector<bool> defined; // per class: a range was available

  static DepthMask all_ones(std::size_t proposals, std::size_t classes);
};

// use_captions = false gives the caption-free variant (class range only).
DepthMask depth_mask(const ImageRecord& record, const FrozenPriors& priors, std::size_t num_classes,
                     bool use_captions = true);

struct ClassCoverage {
  int class_id = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
  double coverage = 0.0;  // fraction of accepted depths inside the class range
};

struct PriorEstimate {
  FrozenPriors priors;
  std::vector<ClassCoverage> coverage;
  std::size_t accepted = 0;
  std::size_t skipped = 0;
};

struct PriorConfig {
  double score_threshold = 0.5;
  std::size_t min_count_word = 2;
  std::size_t min_count_class = 1;
};

// Full estimation pass over a prediction stream. Throws ErrorKind::data when
// a prediction names an image that is not in the dataset.
PriorEstimate estimate_priors(const Dataset& dataset, const std::vector<Detection>& predictions,
                              const PriorConfig& config = {});

std::string priors_to_json(const FrozenPriors& priors);
FrozenPriors priors_from_json(const std::string& text);
void save_priors(const std::string& path, const FrozenPriors& priors);
FrozenPriors load_priors(const std::string& path);
std::string coverage_to_json(const PriorEstimate& estimate, const ClassVocabulary* vocab = nullptr);

}  // namespace wsod
