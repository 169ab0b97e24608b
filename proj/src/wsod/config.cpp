#include "wsod/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "wsod/error.hpp"

namespace wsod {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  fail(ErrorKind::config, "config key '" + key + "': " + why);
}

bool as_bool(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<long>() != 0;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "on" || s == "true" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "no") return false;
  }
  bad(key, "expected a boolean (true/false/on/off)");
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

long as_int(const std::string& key, const json& v) {
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long>(v.get<double>())))
    return static_cast<long>(v.get<double>());
  bad(key, "expected an integer");
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

struct Entry {
  std::function<void(RunConfig&, const std::string&, const json&)> set;
  std::function<json(const RunConfig&)> get;  // empty for aliases
};

template <typename T>
Entry num(T RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const json& v) {
            if constexpr (std::is_floating_point_v<T>)
              c.*field = as_double(k, v);
            else
              c.*field = static_cast<T>(as_int(k, v));
          },
          [field](const RunConfig& c) { return json(c.*field); }};
}

Entry flag(bool RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const json& v) { c.*field = as_bool(k, v); },
          [field](const RunConfig& c) { return json(c.*field); }};
}

template <typename T>
Entry syn(T SyntheticConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const json& v) {
            if constexpr (std::is_floating_point_v<T>)
              c.synthetic.*field = as_double(k, v);
            else
              c.synthetic.*field = static_cast<T>(as_int(k, v));
          },
          [field](const RunConfig& c) { return json(c.synthetic.*field); }};
}

const std::map<std::string, Entry>& table() {
  static const std::map<std::string, Entry> t = [] {
    std::map<std::string, Entry> m;
    m["seed"] = {[](RunConfig& c, const std::string& k, const json& v) {
                   const long s = as_int(k, v);
                   if (s < 0) bad(k, "must be nonnegative");
                   c.seed = static_cast<std::uint64_t>(s);
                 },
                 [](const RunConfig& c) { return json(c.seed); }};
    m["train.epochs"] = num(&RunConfig::epochs);
    m["train.lr"] = num(&RunConfig::lr);
    m["train.momentum"] = num(&RunConfig::momentum);
    m["train.batch_images"] = num(&RunConfig::batch_images);
    m["loss.mil"] = num(&RunConfig::w_mil);
    m["loss.nce"] = num(&RunConfig::w_nce);
    m["loss.ref"] = num(&RunConfig::w_ref);
    m["toggles.siamese_nce"] = flag(&RunConfig::siamese_nce);
    m["toggles.fusion"] = flag(&RunConfig::fusion);
    m["toggles.depth_oicr"] = flag(&RunConfig::depth_oicr);
    m["toggles.depth_attention"] = flag(&RunConfig::depth_attention);
    m["mining.depth_filter"] = {flag(&RunConfig::depth_oicr).set, {}};
    m["attention.enabled"] = {flag(&RunConfig::depth_attention).set, {}};
    m["attention.factor"] = num(&RunConfig::attention_factor);
    m["priors.score_threshold"] = num(&RunConfig::prior_score_threshold);
    m["priors.min_count_word"] = num(&RunConfig::prior_min_count_word);
    m["priors.min_count_class"] = num(&RunConfig::prior_min_count_class);
    m["priors.use_captions"] = flag(&RunConfig::prior_use_captions);
    m["refine.branches"] = num(&RunConfig::refine_branches);
    m["refine.iou_thresh"] = num(&RunConfig::refine_iou_thresh);
    m["refine.score_ratio"] = num(&RunConfig::refine_score_ratio);
    m["model.sigma_on_sum"] = flag(&RunConfig::sigma_on_sum);
    m["model.proj_dim"] = num(&RunConfig::proj_dim);
    m["model.rho_init"] = num(&RunConfig::rho_init);
    m["model.init_std"] = num(&RunConfig::init_std);
    m["nce.include_positive_in_sum"] = flag(&RunConfig::nce_include_positive_in_sum);
    m["labels.source"] = {[](RunConfig& c, const std::string& k, const json& v) {
                            const auto s = as_string(k, v);
                            if (s == "gt") c.label_source = LabelSource::gt;
                            else if (s == "extracted") c.label_source = LabelSource::extracted;
                            else bad(k, "expected gt or extracted");
                          },
                          [](const RunConfig& c) {
                            return json(c.label_source == LabelSource::gt ? "gt" : "extracted");
                          }};
    m["infer.mode"] = {[](RunConfig& c, const std::string& k, const json& v) {
                         auto mode = parse_fusion_mode(as_string(k, v));
                         if (!mode) bad(k, "expected rgb, fused or depth");
                         c.infer_mode = *mode;
                       },
                       [](const RunConfig& c) { return json(fusion_mode_name(c.infer_mode)); }};
    m["infer.min_score"] = num(&RunConfig::infer_min_score);
    m["eval.nms_thresh"] = {[](RunConfig& c, const std::string& k, const json& v) { c.eval.nms_thresh = as_double(k, v); },
                            [](const RunConfig& c) { return json(c.eval.nms_thresh); }};
    m["eval.ap_method"] = {[](RunConfig& c, const std::string& k, const json& v) {
                             const auto s = as_string(k, v);
                             if (s == "all_points") c.eval.ap_method = ApMethod::all_points;
                             else if (s == "voc11") c.eval.ap_method = ApMethod::voc11;
                             else bad(k, "expected all_points or voc11");
                           },
                           [](const RunConfig& c) {
                             return json(c.eval.ap_method == ApMethod::voc11 ? "voc11" : "all_points");
                           }};
    m["synthetic.num_classes"] = syn(&SyntheticConfig::num_classes);
    m["synthetic.num_images"] = syn(&SyntheticConfig::num_images);
    m["synthetic.proposals_per_image"] = syn(&SyntheticConfig::proposals_per_image);
    m["synthetic.feat_dim"] = syn(&SyntheticConfig::feat_dim);
    m["synthetic.image_width"] = syn(&SyntheticConfig::image_width);
    m["synthetic.image_height"] = syn(&SyntheticConfig::image_height);
    m["synthetic.max_objects"] = syn(&SyntheticConfig::max_objects);
    m["synthetic.true_proposals_per_object"] = syn(&SyntheticConfig::true_proposals_per_object);
    m["synthetic.context_proposals_per_object"] = syn(&SyntheticConfig::context_proposals_per_object);
    m["synthetic.signal_strength"] = syn(&SyntheticConfig::signal_strength);
    m["synthetic.context_strength"] = syn(&SyntheticConfig::context_strength);
    m["synthetic.depth_signal_strength"] = syn(&SyntheticConfig::depth_signal_strength);
    m["synthetic.noise"] = syn(&SyntheticConfig::noise);
    m["synthetic.distractor_out_of_band"] = syn(&SyntheticConfig::distractor_out_of_band);
    m["synthetic.caption_noise"] = syn(&SyntheticConfig::caption_noise);
    m["synthetic.world_seed"] = {[](RunConfig& c, const std::string& k, const json& v) {
                                   const long s = as_int(k, v);
                                   if (s < 0) bad(k, "must be nonnegative");
                                   c.synthetic.world_seed = static_cast<std::uint64_t>(s);
                                 },
                                 [](const RunConfig& c) { return json(c.synthetic.world_seed); }};
    m["report.timing"] = flag(&RunConfig::report_timing);
    return m;
  }();
  return t;
}

void apply(RunConfig& cfg, const std::string& key, const json& value) {
  const auto& t = table();
  auto it = t.find(key);
  if (it == t.end()) fail(ErrorKind::config, "unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

void apply_nested(RunConfig& cfg, const json& node, const std::string& prefix) {
  for (auto& [k, v] : node.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      apply_nested(cfg, v, key);
    else
      apply(cfg, key, v);
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  apply(*this, key, v);
}

void RunConfig::merge_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::config, "config root must be a JSON object");
  apply_nested(*this, j, "");
}

std::string RunConfig::to_json() const {
  json out = json::object();
  for (const auto& [key, entry] : table()) {
    if (!entry.get) continue;
    out[json::json_pointer("/" + [&] {
      std::string p = key;
      for (char& ch : p)
        if (ch == '.') ch = '/';
      return p;
    }())] = entry.get(*this);
  }
  return out.dump(2);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& [key, entry] : table()) k.push_back(key);
  return k;
}

void RunConfig::validate() const {
  const auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::config, what);
  };
  check(epochs >= 1, "train.epochs must be >= 1");
  check(lr > 0, "train.lr must be > 0");
  check(momentum >= 0 && momentum < 1, "train.momentum must lie in [0, 1)");
  check(batch_images >= 1, "train.batch_images must be >= 1");
  check(w_mil >= 0 && w_nce >= 0 && w_ref >= 0, "loss weights must be >= 0");
  check(refine_branches >= 0, "refine.branches must be >= 0");
  check(refine_iou_thresh > 0 && refine_iou_thresh <= 1, "refine.iou_thresh must lie in (0, 1]");
  check(refine_score_ratio >= 0 && refine_score_ratio <= 1, "refine.score_ratio must lie in [0, 1]");
  check(attention_factor >= 0 && attention_factor <= 1, "attention.factor must lie in [0, 1]");
  check(proj_dim >= 1, "model.proj_dim must be >= 1");
  check(rho_init > 0, "model.rho_init must be > 0");
  check(init_std >= 0, "model.init_std must be >= 0");
  check(eval.nms_thresh > 0 && eval.nms_thresh <= 1, "eval.nms_thresh must lie in (0, 1]");
  check(prior_min_count_word >= 1 && prior_min_count_class >= 1, "priors min counts must be >= 1");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.merge_json(ss.str());
  return c;
}

}  // namespace wsod
