#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wsod/numkit.hpp"

namespace wsod {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  // Finite, nonnegative coordinates with positive extent.
  bool valid() const noexcept;
  bool inside(double image_width, double image_height) const noexcept;

  friend bool operator==(const Box&, const Box&) = default;
};

struct GtBox {
  Box box;
  int class_id = 0;

  friend bool operator==(const GtBox&, const GtBox&) = default;
};

struct ClassEntry {
  int id = 0;
  std::string name;
  std::vector<std::string> synonyms;  // plurals and alternative tokens
};

class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  // Validates: ids dense in [0, C) and unique, names unique, nonempty, lowercase
  // single tokens. Throws ErrorKind::data otherwise.
  explicit ClassVocabulary(std::vector<ClassEntry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const ClassEntry& operator[](std::size_t id) const { return entries_[id]; }
  const std::vector<ClassEntry>& entries() const noexcept { return entries_; }

  // Class id for a caption token (name or synonym), if any.
  std::optional<int> lookup(std::string_view token) const;

 private:
  std::vector<ClassEntry> entries_;
  std::unordered_map<std::string, int> token_to_id_;
};

ClassVocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const std::string& path, const ClassVocabulary& vocab);

// Single-channel depth image; values in [0, 1], 0 = nearest.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, height x width

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

DepthMap load_depth_map(const std::string& path);

// Mean depth over pixels whose centers (col + 0.5, row + 0.5) fall in
// [x1, x2) x [y1, y2). Throws ErrorKind::data if no pixel center is covered.
double proposal_depth(const DepthMap& map, const Box& box);

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Box> proposals;
  Matrix rgb_features;    // R x d_feat
  Matrix depth_features;  // R x d_feat
  std::vector<double> proposal_depths;
  std::optional<std::string> caption;
  std::optional<std::vector<int>> labels;  // sorted, unique
  std::optional<std::vector<GtBox>> gt_boxes;
  // Sidecar depth image (path as written in the file, resolved map in memory).
  std::optional<std::string> depth_map_path;
  std::shared_ptr<const DepthMap> depth_map;

  std::size_t num_proposals() const noexcept { return proposals.size(); }
};

// Checks every ImageRecord invariant; throws ErrorKind::data with a message
// naming the image and the offending field.
void validate_record(const ImageRecord& record, std::size_t num_classes);

using Dataset = std::vector<ImageRecord>;

// One JSON object per line. Blank lines are ignored. Parse errors carry the
// 1-based line number; validation errors name the image_id and field.
Dataset load_dataset(const std::string& path, const ClassVocabulary& vocab);
Dataset parse_dataset(std::string_view text, const ClassVocabulary& vocab,
                      const std::string& base_dir = ".");
void save_dataset(const std::string& path, const Dataset& records);
std::string dataset_to_jsonl(const Dataset& records);

// Lowercase ASCII tokens split on every non-alphanumeric character.
std::vector<std::string> tokenize(std::string_view text);
std::vector<std::string> distinct_tokens(std::string_view text);

// Whole-token exact match of class names and synonyms; sorted, deduplicated.
std::vector<int> extract_labels(std::string_view caption, const ClassVocabulary& vocab);

}  // namespace wsod
