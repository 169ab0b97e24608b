#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsod/data.hpp"

namespace wsod {

struct Detection {
  std::string image_id;
  int class_id = 0;
  Box box;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Intersection over union with continuous coordinates (area = w * h).
double iou(const Box& a, const Box& b);

// Greedy class-wise NMS: detections are grouped by (image_id, class_id);
// within a group, a detection is dropped if its IoU with an already kept one
// exceeds `thresh`. Output is ordered by descending confidence, ties keeping
// input order.
std::vector<Detection> nms(const std::vector<Detection>& dets, double thresh);

enum class ApMethod { all_points, voc11 };

struct ClassMatch {
  std::vector<bool> is_tp;       // per detection, in ranked order
  std::size_t num_gt = 0;
};

// Greedy matching for one class: `dets` are ranked by descending confidence
// (stable); each one takes the unmatched GT in its image with the highest IoU
// when that IoU reaches `iou_thresh`.
ClassMatch match_detections(const std::vector<Detection>& dets,
                            const std::map<std::string, std::vector<Box>>& gts,
                            double iou_thresh);

// Area under the interpolated precision/recall curve of a ranked TP/FP list.
double average_precision_from_matches(const ClassMatch& m, ApMethod method = ApMethod::all_points);

// Single-class AP; returns 0 when there is no GT.
double average_precision(const std::vector<Detection>& dets,
                         const std::map<std::string, std::vector<Box>>& gts,
                         double iou_thresh, ApMethod method = ApMethod::all_points);

// Single-class CorLoc: fraction of images in `gts` whose highest-confidence
// detection for the class overlaps some GT with IoU >= iou_thresh.
double corloc(const std::vector<Detection>& dets,
              const std::map<std::string, std::vector<Box>>& gts, double iou_thresh);

struct EvalConfig {
  double nms_thresh = 0.5;
  ApMethod ap_method = ApMethod::all_points;
  double small_area = 32.0 * 32.0;
  double large_area = 96.0 * 96.0;
};

struct ThresholdCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t gt = 0;
};

struct EvalReport {
  std::vector<double> thresholds;                   // 0.50, 0.55, ..., 0.95
  std::vector<int> classes;                         // classes with >= 1 GT
  std::map<int, std::vector<double>> ap;            // class -> AP per threshold
  std::map<int, std::vector<ThresholdCounts>> counts;
  std::map<int, std::vector<double>> class_corloc;  // class -> CorLoc per threshold
  std::vector<double> map_per_threshold;
  std::vector<double> corloc_per_threshold;
  double map_50_95 = 0, map_50 = 0, map_75 = 0;
  double corloc_50_95 = 0, corloc_50 = 0, corloc_75 = 0;
  double map_small = 0, map_medium = 0, map_large = 0;
};

std::vector<double> iou_threshold_grid();

// Full protocol: per-class NMS, AP per IoU threshold, mAP over classes with GT,
// CorLoc on the raw (pre-NMS) detections, and area-bucketed mAP@0.5:0.95.
// Throws ErrorKind::data for detections naming an unknown image.
EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& dataset,
                    const EvalConfig& config = {});

std::string report_to_json(const EvalReport& report, const ClassVocabulary* vocab = nullptr);
// Fixed-width table: IoU 0.5:0.95 / 0.5 / 0.75, area S / M / L, then CorLoc.
std::string report_table(const EvalReport& report, const std::string& label = "model");

// Detections / predictions JSON Lines: {"image_id", "class_id", "box", "score"}.
std::vector<Detection> load_detections(const std::string& path);
std::vector<Detection> parse_detections(std::string_view text);
void save_detections(const std::string& path, const std::vector<Detection>& dets);
std::string detections_to_jsonl(const std::vector<Detection>& dets);

}  // namespace wsod
