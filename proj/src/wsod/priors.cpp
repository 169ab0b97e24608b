#include "wsod/priors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wsod/error.hpp"

namespace wsod {

using nlohmann::json;

double RunningMoments::stddev() const {
  if (count == 0) return 0.0;
  return std::sqrt(std::max(0.0, m2 / static_cast<double>(count)));
}

std::optional<DepthRange> freeze_range(const RunningMoments& m, std::size_t min_count) {
  if (m.count == 0 || m.count < min_count) return std::nullopt;
  const double mu = m.mean();
  const double s = m.stddev();
  return DepthRange{mu - s, mu + s};
}

void PriorStats::merge(const PriorStats& o) {
  for (const auto& [k, m] : o.by_class_word) by_class_word[k].merge(m);
  for (const auto& [k, m] : o.by_class) by_class[k].merge(m);
  skipped += o.skipped;
}

std::optional<double> box_depth(const ImageRecord& record, const Box& box) {
  for (std::size_t i = 0; i < record.proposals.size() && i < record.proposal_depths.size(); ++i) {
    const Box& p = record.proposals[i];
    if (std::abs(p.x1 - box.x1) < 1e-9 && std::abs(p.y1 - box.y1) < 1e-9 &&
        std::abs(p.x2 - box.x2) < 1e-9 && std::abs(p.y2 - box.y2) < 1e-9)
      return record.proposal_depths[i];
  }
  if (record.depth_map) {
    try {
      return proposal_depth(*record.depth_map, box);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void accumulate(PriorStats& stats, const PriorPrediction& prediction, const ImageRecord& record,
                double score_threshold) {
  if (!(prediction.score > score_threshold)) return;
  if (!prediction.box.inside(record.width, record.height)) {
    ++stats.skipped;
    return;
  }
  const auto depth = box_depth(record, prediction.box);
  if (!depth) {
    ++stats.skipped;
    return;
  }
  stats.by_class[prediction.class_id].add(*depth);
  if (record.caption)
    for (const std::string& w : distinct_tokens(*record.caption))
      stats.by_class_word[{prediction.class_id, w}].add(*depth);
}

namespace {

MomentSummary summarize(const RunningMoments& m) { return {m.count, m.mean(), m.stddev()}; }

std::optional<DepthRange> usable(const MomentSummary& s, std::size_t min_count) {
  if (s.count == 0 || s.count < min_count) return std::nullopt;
  return s.range();
}

}  // namespace

std::optional<DepthRange> FrozenPriors::class_range(int class_id) const {
  auto it = by_class.find(class_id);
  return it == by_class.end() ? std::nullopt : usable(it->second, min_count_class);
}

std::optional<DepthRange> FrozenPriors::word_range(int class_id, const std::string& word) const {
  auto it = by_class_word.find({class_id, word});
  return it == by_class_word.end() ? std::nullopt : usable(it->second, min_count_word);
}

FrozenPriors freeze(const PriorStats& stats) {
  FrozenPriors f;
  f.min_count_word = stats.min_count_word;
  f.min_count_class = stats.min_count_class;
  for (const auto& [k, m] : stats.by_class) f.by_class[k] = summarize(m);
  for (const auto& [k, m] : stats.by_class_word) f.by_class_word[k] = summarize(m);
  return f;
}

std::optional<DepthRange> image_range(const FrozenPriors& priors, int class_id,
                                      const std::optional<std::string>& caption) {
  if (caption) {
    double lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    for (const std::string& w : distinct_tokens(*caption)) {
      if (auto r = priors.word_range(class_id, w)) {
        lo += r->lo;
        hi += r->hi;
        ++n;
      }
    }
    if (n == 1) return DepthRange{lo, hi};
    if (n > 1) return DepthRange{lo / static_cast<double>(n), hi / static_cast<double>(n)};
  }
  return priors.class_range(class_id);
}

DepthMask DepthMask::all_ones(std::size_t proposals, std::size_t classes) {
  return DepthMask{Matrix(proposals, classes, 1.0), std::vector<bool>(classes, false)};
}

DepthMask depth_mask(const ImageRecord& record, const FrozenPriors& priors, std::size_t num_classes,
                     bool use_captions) {
  const std::size_t R = record.num_proposals();
  DepthMask mask = DepthMask::all_ones(R, num_classes);
  const std::optional<std::string> no_caption;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto range = image_range(priors, static_cast<int>(c), use_captions ? record.caption : no_caption);
    if (!range) continue;
    mask.defined[c] = true;
    for (std::size_t i = 0; i < R; ++i) mask.m(i, c) = range->contains(record.proposal_depths[i]) ? 1.0 : 0.0;
  }
  return mask;
}

PriorEstimate estimate_priors(const Dataset& dataset, const std::vector<Detection>& predictions,
                              const PriorConfig& config) {
  std::map<std::string, const ImageRecord*> images;
  for (const ImageRecord& r : dataset) images.emplace(r.image_id, &r);

  PriorStats stats;
  stats.min_count_word = config.min_count_word;
  stats.min_count_class = config.min_count_class;
  std::map<int, std::vector<double>> accepted_depths;
  PriorEstimate est;
  for (const Detection& d : predictions) {
    auto it = images.find(d.image_id);
    if (it == images.end()) fail(ErrorKind::data, "prediction references unknown image " + d.image_id);
    const std::size_t before = stats.by_class[d.class_id].count;
    accumulate(stats, PriorPrediction{d.box, d.class_id, d.confidence}, *it->second, config.score_threshold);
    if (stats.by_class[d.class_id].count > before) {
      ++est.accepted;
      accepted_depths[d.class_id].push_back(*box_depth(*it->second, d.box));
    }
  }
  // Drop classes that only gained an empty entry from the lookups above.
  std::erase_if(stats.by_class, [](const auto& kv) { return kv.second.count == 0; });
  est.skipped = stats.skipped;
  est.priors = freeze(stats);
  for (const auto& [c, s] : est.priors.by_class) {
    ClassCoverage cov{c, s.count, s.mean, s.std, 0.0};
    if (auto range = est.priors.class_range(c)) {
      std::size_t inside = 0;
      for (double d : accepted_depths[c]) inside += range->contains(d) ? 1 : 0;
      cov.coverage = static_cast<double>(inside) / static_cast<double>(accepted_depths[c].size());
    }
    est.coverage.push_back(cov);
  }
  return est;
}

namespace {

json summary_json(const MomentSummary& s) { return {{"count", s.count}, {"mean", s.mean}, {"std", s.std}}; }

MomentSummary summary_from(const json& j) {
  return {j.at("count").get<std::size_t>(), j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace

std::string priors_to_json(const FrozenPriors& priors) {
  json j;
  j["min_count"] = priors.min_count_word;
  j["min_count_class"] = priors.min_count_class;
  json by_class = json::object();
  for (const auto& [c, s] : priors.by_class) by_class[std::to_string(c)] = summary_json(s);
  json by_word = json::object();
  for (const auto& [k, s] : priors.by_class_word) by_word[std::to_string(k.first) + "|" + k.second] = summary_json(s);
  j["by_class"] = std::move(by_class);
  j["by_class_word"] = std::move(by_word);
  return j.dump(2);
}

FrozenPriors priors_from_json(const std::string& text) {
  FrozenPriors f;
  try {
    const json j = json::parse(text);
    f.min_count_word = j.at("min_count").get<std::size_t>();
    f.min_count_class = j.value("min_count_class", std::size_t{1});
    for (auto& [k, v] : j.at("by_class").items()) f.by_class[std::stoi(k)] = summary_from(v);
    for (auto& [k, v] : j.at("by_class_word").items()) {
      const auto bar = k.find('|');
      if (bar == std::string::npos) fail(ErrorKind::data, "priors: key '" + k + "' is not <id>|<word>");
      f.by_class_word[{std::stoi(k.substr(0, bar)), k.substr(bar + 1)}] = summary_from(v);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("priors: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::data, std::string("priors: bad class id: ") + e.what());
  }
  return f;
}

void save_priors(const std::string& path, const FrozenPriors& priors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write priors " + path);
  out << priors_to_json(priors) << "\n";
}

FrozenPriors load_priors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read priors " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return priors_from_json(ss.str());
}

std::string coverage_to_json(const PriorEstimate& est, const ClassVocabulary* vocab) {
  json classes = json::array();
  for (const ClassCoverage& c : est.coverage) {
    json e = {{"class_id", c.class_id}, {"count", c.count}, {"mean", c.mean}, {"std", c.std},
              {"coverage", c.coverage}};
    if (vocab && static_cast<std::size_t>(c.class_id) < vocab->size()) e["name"] = (*vocab)[c.class_id].name;
    classes.push_back(std::move(e));
  }
  return json{{"accepted", est.accepted}, {"skipped", est.skipped}, {"classes", classes}}.dump(2);
}

}  // namespace wsod
