#include "wsod/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wsod/error.hpp"

namespace wsod {

using nlohmann::json;

bool Box::valid() const noexcept {
  const bool finite = std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2);
  return finite && x1 >= 0 && y1 >= 0 && x2 > x1 && y2 > y1;
}

bool Box::inside(double image_width, double image_height) const noexcept {
  return valid() && x2 <= image_width && y2 <= image_height;
}

namespace {

bool is_token(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) {
    return std::isdigit(ch) || std::islower(ch);
  });
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, std::string("cannot read ") + what + " " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Box box_from_json(const json& j, std::size_t expected) {
  if (!j.is_array() || j.size() != expected) throw std::invalid_argument("box must have " + std::to_string(expected) + " numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

Matrix matrix_from_json(const json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != cols)
      throw std::invalid_argument(std::string(field) + " rows must all have the same length");
    for (const auto& v : r) data.push_back(v.get<double>());
  }
  return Matrix(rows, cols, std::move(data));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row_span(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

[[noreturn]] void invalid(const ImageRecord& r, const std::string& what) {
  fail(ErrorKind::data, "image " + r.image_id + ": " + what);
}

ImageRecord record_from_json(const json& j, const std::string& base_dir) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  for (const auto& b : j.at("proposals")) r.proposals.push_back(box_from_json(b, 4));
  r.rgb_features = matrix_from_json(j.at("rgb_features"), "rgb_features");
  r.depth_features = matrix_from_json(j.at("depth_features"), "depth_features");
  if (j.contains("caption") && !j["caption"].is_null()) r.caption = j["caption"].get<std::string>();
  if (j.contains("labels") && !j["labels"].is_null()) {
    auto labels = j["labels"].get<std::vector<int>>();
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    r.labels = std::move(labels);
  }
  if (j.contains("gt_boxes") && !j["gt_boxes"].is_null()) {
    std::vector<GtBox> gts;
    for (const auto& g : j["gt_boxes"]) {
      const Box b = box_from_json(g, 5);
      gts.push_back(GtBox{b, g[4].get<int>()});
    }
    r.gt_boxes = std::move(gts);
  }
  if (j.contains("depth_map") && !j["depth_map"].is_null()) {
    r.depth_map_path = j["depth_map"].get<std::string>();
    std::filesystem::path p(*r.depth_map_path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    r.depth_map = std::make_shared<const DepthMap>(load_depth_map(p.string()));
  }
  if (j.contains("proposal_depths") && !j["proposal_depths"].is_null()) {
    r.proposal_depths = j["proposal_depths"].get<std::vector<double>>();
  } else if (r.depth_map) {
    for (const Box& b : r.proposals) r.proposal_depths.push_back(proposal_depth(*r.depth_map, b));
  }
  return r;
}

json record_to_json(const ImageRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  j["width"] = r.width;
  j["height"] = r.height;
  json props = json::array();
  for (const Box& b : r.proposals) props.push_back({b.x1, b.y1, b.x2, b.y2});
  j["proposals"] = std::move(props);
  j["rgb_features"] = matrix_to_json(r.rgb_features);
  j["depth_features"] = matrix_to_json(r.depth_features);
  j["proposal_depths"] = r.proposal_depths;
  if (r.caption) j["caption"] = *r.caption;
  if (r.labels) j["labels"] = *r.labels;
  if (r.gt_boxes) {
    json gts = json::array();
    for (const GtBox& g : *r.gt_boxes) gts.push_back({g.box.x1, g.box.y1, g.box.x2, g.box.y2, g.class_id});
    j["gt_boxes"] = std::move(gts);
  }
  if (r.depth_map_path) j["depth_map"] = *r.depth_map_path;
  return j;
}

}  // namespace

ClassVocabulary::ClassVocabulary(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const ClassEntry& a, const ClassEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const ClassEntry& e = entries_[i];
    if (e.id != static_cast<int>(i))
      fail(ErrorKind::data, "vocabulary ids must be dense and unique in [0, C); missing id " + std::to_string(i));
    if (!is_token(e.name))
      fail(ErrorKind::data, "vocabulary name '" + e.name + "' must be a nonempty lowercase token");
    for (const std::string& t : e.synonyms)
      if (!is_token(t)) fail(ErrorKind::data, "vocabulary synonym '" + t + "' must be a lowercase token");
  }
  for (const ClassEntry& e : entries_) {
    if (!token_to_id_.emplace(e.name, e.id).second)
      fail(ErrorKind::data, "duplicate vocabulary token '" + e.name + "'");
  }
  for (const ClassEntry& e : entries_)
    for (const std::string& t : e.synonyms) {
      auto [it, inserted] = token_to_id_.emplace(t, e.id);
      if (!inserted && it->second != e.id)
        fail(ErrorKind::data, "synonym '" + t + "' maps to two classes");
    }
}

std::optional<int> ClassVocabulary::lookup(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

ClassVocabulary load_vocabulary(const std::string& path) {
  const std::string text = read_file(path, "vocabulary");
  std::vector<ClassEntry> entries;
  try {
    const json j = json::parse(text);
    if (!j.is_array()) fail(ErrorKind::data, "vocabulary must be a JSON array");
    for (const auto& e : j) {
      ClassEntry entry;
      entry.id = e.at("id").get<int>();
      entry.name = e.at("name").get<std::string>();
      if (e.contains("synonyms")) entry.synonyms = e["synonyms"].get<std::vector<std::string>>();
      entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "vocabulary " + path + ": " + e.what());
  }
  return ClassVocabulary(std::move(entries));
}

void save_vocabulary(const std::string& path, const ClassVocabulary& vocab) {
  json j = json::array();
  for (const ClassEntry& e : vocab.entries())
    j.push_back({{"id", e.id}, {"name", e.name}, {"synonyms", e.synonyms}});
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write vocabulary " + path);
  out << j.dump(2) << "\n";
}

DepthMap load_depth_map(const std::string& path) {
  const std::string text = read_file(path, "depth map");
  DepthMap m;
  try {
    const json j = json::parse(text);
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.values = j.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "depth map " + path + ": " + e.what());
  }
  if (m.width <= 0 || m.height <= 0) fail(ErrorKind::data, "depth map " + path + ": nonpositive size");
  if (m.values.size() != static_cast<std::size_t>(m.width) * m.height)
    fail(ErrorKind::data, "depth map " + path + ": value count does not match width x height");
  for (double v : m.values)
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::data, "depth map " + path + ": value outside [0, 1]");
  return m;
}

double proposal_depth(const DepthMap& map, const Box& box) {
  // Pixel columns j with x1 <= j + 0.5 < x2, i.e. ceil(x1 - 0.5) <= j < ceil(x2 - 0.5).
  const auto first = [](double lo) { return static_cast<long>(std::ceil(lo - 0.5)); };
  const long c0 = std::max(0L, first(box.x1));
  const long c1 = std::min<long>(map.width, first(box.x2));
  const long r0 = std::max(0L, first(box.y1));
  const long r1 = std::min<long>(map.height, first(box.y2));
  if (c0 >= c1 || r0 >= r1) fail(ErrorKind::data, "degenerate region: box covers no pixel centers");
  double total = 0.0;
  for (long r = r0; r < r1; ++r)
    for (long c = c0; c < c1; ++c) total += map.at(static_cast<int>(r), static_cast<int>(c));
  return total / static_cast<double>((c1 - c0) * (r1 - r0));
}

void validate_record(const ImageRecord& r, std::size_t num_classes) {
  if (r.image_id.empty()) fail(ErrorKind::data, "record with empty image_id");
  if (r.width <= 0 || r.height <= 0) invalid(r, "width and height must be positive");
  const std::size_t n = r.proposals.size();
  if (n == 0) invalid(r, "proposals must be nonempty");
  for (const Box& b : r.proposals) {
    if (!b.valid()) invalid(r, "degenerate box in proposals");
    if (!b.inside(r.width, r.height)) invalid(r, "proposal box outside the image");
  }
  if (r.rgb_features.rows() != n || r.depth_features.rows() != n)
    invalid(r, "feature/proposal count mismatch");
  if (r.rgb_features.cols() == 0 || r.rgb_features.cols() != r.depth_features.cols())
    invalid(r, "rgb_features and depth_features must share a nonzero feature dimension");
  if (!r.rgb_features.all_finite() || !r.depth_features.all_finite())
    invalid(r, "nonfinite feature value");
  if (r.proposal_depths.size() != n) invalid(r, "proposal_depths/proposal count mismatch");
  for (double d : r.proposal_depths)
    if (!(d >= 0.0 && d <= 1.0)) invalid(r, "proposal_depths value outside [0, 1]");
  if (r.labels)
    for (int c : *r.labels)
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) invalid(r, "label outside [0, C)");
  if (r.gt_boxes)
    for (const GtBox& g : *r.gt_boxes) {
      if (!g.box.valid()) invalid(r, "degenerate box in gt_boxes");
      if (!g.box.inside(r.width, r.height)) invalid(r, "gt box outside the image");
      if (g.class_id < 0 || static_cast<std::size_t>(g.class_id) >= num_classes)
        invalid(r, "gt_boxes class_id outside [0, C)");
    }
}

Dataset parse_dataset(std::string_view text, const ClassVocabulary& vocab, const std::string& base_dir) {
  Dataset out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    ImageRecord r;
    try {
      r = record_from_json(json::parse(line), base_dir);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, "parse error on line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      fail(ErrorKind::data, "parse error on line " + std::to_string(line_no) + ": " + e.what());
    }
    validate_record(r, vocab.size());
    out.push_back(std::move(r));
    if (end == text.size()) break;
  }
  return out;
}

Dataset load_dataset(const std::string& path, const ClassVocabulary& vocab) {
  const std::string text = read_file(path, "dataset");
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_dataset(text, vocab, dir.empty() ? "." : dir.string());
}

std::string dataset_to_jsonl(const Dataset& records) {
  std::string out;
  for (const ImageRecord& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write dataset " + path);
  out << dataset_to_jsonl(records);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> distinct_tokens(std::string_view text) {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

std::vector<int> extract_labels(std::string_view caption, const ClassVocabulary& vocab) {
  std::set<int> ids;
  for (const std::string& t : tokenize(caption))
    if (auto id = vocab.lookup(t)) ids.insert(*id);
  return {ids.begin(), ids.end()};
}

}  // namespace wsod
