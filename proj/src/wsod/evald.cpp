#include "wsod/evald.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wsod/error.hpp"

namespace wsod {

using nlohmann::json;

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

std::vector<std::size_t> ranked_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  return order;
}

}  // namespace

std::vector<Detection> nms(const std::vector<Detection>& dets, double thresh) {
  if (!(thresh > 0 && thresh <= 1)) fail(ErrorKind::config, "nms: threshold must lie in (0, 1]");
  const auto order = ranked_order(dets);
  std::vector<Detection> kept;
  std::map<std::pair<std::string, int>, std::vector<Box>> kept_boxes;
  for (std::size_t idx : order) {
    const Detection& d = dets[idx];
    auto& group = kept_boxes[{d.image_id, d.class_id}];
    const bool suppressed = std::any_of(group.begin(), group.end(),
                                        [&](const Box& k) { return iou(k, d.box) > thresh; });
    if (suppressed) continue;
    group.push_back(d.box);
    kept.push_back(d);
  }
  return kept;
}

ClassMatch match_detections(const std::vector<Detection>& dets,
                            const std::map<std::string, std::vector<Box>>& gts, double iou_thresh) {
  ClassMatch m;
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [image, boxes] : gts) {
    m.num_gt += boxes.size();
    used[image].assign(boxes.size(), false);
  }
  for (std::size_t idx : ranked_order(dets)) {
    const Detection& d = dets[idx];
    auto it = gts.find(d.image_id);
    bool tp = false;
    if (it != gts.end()) {
      auto& flags = used[d.image_id];
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (flags[j]) continue;
        const double o = iou(d.box, it->second[j]);
        if (o > best) {
          best = o;
          best_j = j;
        }
      }
      if (best >= iou_thresh) {
        flags[best_j] = true;
        tp = true;
      }
    }
    m.is_tp.push_back(tp);
  }
  return m;
}

double average_precision_from_matches(const ClassMatch& m, ApMethod method) {
  if (m.num_gt == 0) return 0.0;
  const std::size_t n = m.is_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (m.is_tp[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(m.num_gt);
  }
  if (method == ApMethod::voc11) {
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double best = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (recall[k] >= r) best = std::max(best, precision[k]);
      ap += best;
    }
    return ap / 11.0;
  }
  // Precision envelope, then sum over recall increments.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double average_precision(const std::vector<Detection>& dets,
                         const std::map<std::string, std::vector<Box>>& gts, double iou_thresh,
                         ApMethod method) {
  return average_precision_from_matches(match_detections(dets, gts, iou_thresh), method);
}

double corloc(const std::vector<Detection>& dets,
              const std::map<std::string, std::vector<Box>>& gts, double iou_thresh) {
  std::size_t images = 0, hits = 0;
  std::map<std::string, const Detection*> top;
  for (std::size_t idx : ranked_order(dets)) top.try_emplace(dets[idx].image_id, &dets[idx]);
  for (const auto& [image, boxes] : gts) {
    if (boxes.empty()) continue;
    ++images;
    auto it = top.find(image);
    if (it == top.end()) continue;
    const bool hit = std::any_of(boxes.begin(), boxes.end(),
                                 [&](const Box& g) { return iou(it->second->box, g) >= iou_thresh; });
    if (hit) ++hits;
  }
  return images ? static_cast<double>(hits) / static_cast<double>(images) : 0.0;
}

std::vector<double> iou_threshold_grid() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// COCO-style area range: GTs outside the range are ignored (a detection that
// matches one counts as neither TP nor FP), and unmatched detections whose own
// area falls outside the range are ignored as well.
double area_ap(const std::vector<Detection>& dets, const std::map<std::string, std::vector<Box>>& gts,
               double iou_thresh, double lo, double hi, ApMethod method) {
  const auto in_range = [&](const Box& b) { return b.area() >= lo && b.area() < hi; };
  std::map<std::string, std::vector<bool>> used;
  std::size_t num_gt = 0;
  for (const auto& [image, boxes] : gts) {
    used[image].assign(boxes.size(), false);
    for (const Box& b : boxes) num_gt += in_range(b) ? 1 : 0;
  }
  ClassMatch m;
  m.num_gt = num_gt;
  for (std::size_t idx : ranked_order(dets)) {
    const Detection& d = dets[idx];
    auto it = gts.find(d.image_id);
    double best = -1.0;
    std::size_t best_j = 0;
    if (it != gts.end()) {
      // Prefer in-range GTs, as COCO sorts ignored GTs last.
      for (int pass = 0; pass < 2 && best < iou_thresh; ++pass) {
        best = -1.0;
        for (std::size_t j = 0; j < it->second.size(); ++j) {
          if (used[d.image_id][j] || in_range(it->second[j]) != (pass == 0)) continue;
          const double o = iou(d.box, it->second[j]);
          if (o > best) {
            best = o;
            best_j = j;
          }
        }
      }
    }
    if (best >= iou_thresh) {
      used[d.image_id][best_j] = true;
      if (in_range(it->second[best_j])) m.is_tp.push_back(true);
      continue;
    }
    if (in_range(d.box)) m.is_tp.push_back(false);
  }
  return average_precision_from_matches(m, method);
}

}  // namespace

EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& dataset, const EvalConfig& config) {
  std::map<std::string, const ImageRecord*> images;
  for (const ImageRecord& r : dataset) images.emplace(r.image_id, &r);
  for (const Detection& d : dets)
    if (!images.count(d.image_id)) fail(ErrorKind::data, "detection references unknown image " + d.image_id);

  // class -> image -> GT boxes
  std::map<int, std::map<std::string, std::vector<Box>>> gts;
  for (const ImageRecord& r : dataset)
    if (r.gt_boxes)
      for (const GtBox& g : *r.gt_boxes) gts[g.class_id][r.image_id].push_back(g.box);

  const auto kept = nms(dets, config.nms_thresh);
  std::map<int, std::vector<Detection>> kept_by_class, raw_by_class;
  for (const Detection& d : kept) kept_by_class[d.class_id].push_back(d);
  for (const Detection& d : dets) raw_by_class[d.class_id].push_back(d);

  EvalReport rep;
  rep.thresholds = iou_threshold_grid();
  const std::size_t T = rep.thresholds.size();
  rep.map_per_threshold.assign(T, 0.0);
  rep.corloc_per_threshold.assign(T, 0.0);
  std::vector<double> small, medium, large;
  for (const auto& [c, per_image] : gts) {
    rep.classes.push_back(c);
    const auto& cd = kept_by_class[c];
    const auto& raw = raw_by_class[c];
    auto& aps = rep.ap[c];
    auto& counts = rep.counts[c];
    auto& cls_corloc = rep.class_corloc[c];
    std::vector<double> s, m, l;
    for (std::size_t t = 0; t < T; ++t) {
      const double th = rep.thresholds[t];
      const ClassMatch match = match_detections(cd, per_image, th);
      aps.push_back(average_precision_from_matches(match, config.ap_method));
      const auto tp = static_cast<std::size_t>(std::count(match.is_tp.begin(), match.is_tp.end(), true));
      counts.push_back({tp, match.is_tp.size() - tp, match.num_gt});
      cls_corloc.push_back(corloc(raw, per_image, th));
      s.push_back(area_ap(cd, per_image, th, 0.0, config.small_area, config.ap_method));
      m.push_back(area_ap(cd, per_image, th, config.small_area, config.large_area, config.ap_method));
      l.push_back(area_ap(cd, per_image, th, config.large_area, 1e300, config.ap_method));
    }
    // Area buckets average only over classes that have a GT in the bucket.
    const auto has_gt_in = [&](double lo, double hi) {
      for (const auto& [img, boxes] : per_image)
        for (const Box& b : boxes)
          if (b.area() >= lo && b.area() < hi) return true;
      return false;
    };
    if (has_gt_in(0.0, config.small_area)) small.push_back(mean(s));
    if (has_gt_in(config.small_area, config.large_area)) medium.push_back(mean(m));
    if (has_gt_in(config.large_area, 1e300)) large.push_back(mean(l));
  }
  const double nclass = static_cast<double>(rep.classes.size());
  for (std::size_t t = 0; t < T && nclass > 0; ++t) {
    double ap_sum = 0.0, cl_sum = 0.0;
    for (int c : rep.classes) {
      ap_sum += rep.ap[c][t];
      cl_sum += rep.class_corloc[c][t];
    }
    rep.map_per_threshold[t] = ap_sum / nclass;
    rep.corloc_per_threshold[t] = cl_sum / nclass;
  }
  rep.map_50_95 = mean(rep.map_per_threshold);
  rep.map_50 = rep.map_per_threshold[0];
  rep.map_75 = rep.map_per_threshold[5];
  rep.corloc_50_95 = mean(rep.corloc_per_threshold);
  rep.corloc_50 = rep.corloc_per_threshold[0];
  rep.corloc_75 = rep.corloc_per_threshold[5];
  rep.map_small = mean(small);
  rep.map_medium = mean(medium);
  rep.map_large = mean(large);
  return rep;
}

std::string report_to_json(const EvalReport& rep, const ClassVocabulary* vocab) {
  json j;
  j["thresholds"] = rep.thresholds;
  j["map"] = {{"0.5:0.95", rep.map_50_95}, {"0.5", rep.map_50}, {"0.75", rep.map_75},
              {"small", rep.map_small}, {"medium", rep.map_medium}, {"large", rep.map_large}};
  j["corloc"] = {{"0.5:0.95", rep.corloc_50_95}, {"0.5", rep.corloc_50}, {"0.75", rep.corloc_75}};
  j["map_per_threshold"] = rep.map_per_threshold;
  j["corloc_per_threshold"] = rep.corloc_per_threshold;
  json classes = json::array();
  for (int c : rep.classes) {
    json e;
    e["class_id"] = c;
    if (vocab && static_cast<std::size_t>(c) < vocab->size()) e["name"] = (*vocab)[c].name;
    e["ap"] = rep.ap.at(c);
    e["corloc"] = rep.class_corloc.at(c);
    json counts = json::array();
    for (const auto& k : rep.counts.at(c)) counts.push_back({{"tp", k.tp}, {"fp", k.fp}, {"gt", k.gt}});
    e["counts"] = std::move(counts);
    classes.push_back(std::move(e));
  }
  j["classes"] = std::move(classes);
  return j.dump(2);
}

std::string report_table(const EvalReport& rep, const std::string& label) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %9s %6s %6s %6s %6s %6s | %9s %6s %6s\n", "", "AP", "", "",
                "AP", "area", "", "CorLoc", "", "");
  os << line;
  std::snprintf(line, sizeof line, "%-24s %9s %6s %6s %6s %6s %6s | %9s %6s %6s\n", "Method",
                "0.5:0.95", "0.5", "0.75", "S", "M", "L", "0.5:0.95", "0.5", "0.75");
  os << line;
  std::snprintf(line, sizeof line, "%-24s %9.1f %6.1f %6.1f %6.1f %6.1f %6.1f | %9.1f %6.1f %6.1f\n",
                label.c_str(), 100 * rep.map_50_95, 100 * rep.map_50, 100 * rep.map_75,
                100 * rep.map_small, 100 * rep.map_medium, 100 * rep.map_large,
                100 * rep.corloc_50_95, 100 * rep.corloc_50, 100 * rep.corloc_75);
  os << line;
  return os.str();
}

std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Detection d;
      d.image_id = j.at("image_id").get<std::string>();
      d.class_id = j.at("class_id").get<int>();
      const auto b = j.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw std::invalid_argument("box must have 4 numbers");
      d.box = Box{b[0], b[1], b[2], b[3]};
      d.confidence = j.at("score").get<double>();
      if (!d.box.valid()) throw std::invalid_argument("degenerate box");
      if (!std::isfinite(d.confidence)) throw std::invalid_argument("nonfinite score");
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, "detections line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      fail(ErrorKind::data, "detections line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read detections " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_detections(ss.str());
}

std::string detections_to_jsonl(const std::vector<Detection>& dets) {
  std::string out;
  for (const Detection& d : dets) {
    json j;
    j["image_id"] = d.image_id;
    j["class_id"] = d.class_id;
    j["box"] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
    j["score"] = d.confidence;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_detections(const std::string& path, const std::vector<Detection>& dets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write detections " + path);
  out << detections_to_jsonl(dets);
}

}  // namespace wsod
