#include "wsod.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "wsod/config.hpp"
#include "wsod/error.hpp"
#include "wsod/pipeline.hpp"
#include "wsod/synthetic.hpp"

struct wsod_config {
  wsod::RunConfig value;
};
struct wsod_vocab {
  wsod::ClassVocabulary value;
};
struct wsod_dataset {
  wsod::Dataset value;
};
struct wsod_priors {
  wsod::FrozenPriors value;
};
struct wsod_model {
  wsod::ModelParams value;
};
struct wsod_detections {
  std::vector<wsod::Detection> value;
};

namespace {

thread_local std::string last_error;

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

wsod_status status_for(wsod::ErrorKind kind) {
  switch (kind) {
    case wsod::ErrorKind::config: return WSOD_ERR_CONFIG;
    case wsod::ErrorKind::data: return WSOD_ERR_DATA;
    case wsod::ErrorKind::shape: return WSOD_ERR_SHAPE;
    case wsod::ErrorKind::numeric: return WSOD_ERR_NUMERIC;
    case wsod::ErrorKind::io: return WSOD_ERR_IO;
    case wsod::ErrorKind::checkpoint: return WSOD_ERR_CHECKPOINT;
  }
  return WSOD_ERR_INTERNAL;
}

template <typename F>
wsod_status guard(F&& f) {
  try {
    last_error.clear();
    f();
    return WSOD_OK;
  } catch (const wsod::Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const ArgumentError& e) {
    last_error = e.what();
    return WSOD_ERR_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return WSOD_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

wsod::FusionMode to_mode(wsod_mode m) {
  switch (m) {
    case WSOD_MODE_RGB: return wsod::FusionMode::rgb_only;
    case WSOD_MODE_FUSED: return wsod::FusionMode::fused;
    case WSOD_MODE_DEPTH: return wsod::FusionMode::depth_only;
  }
  throw wsod::Error(wsod::ErrorKind::config, "unknown inference mode");
}

}  // namespace

extern "C" {

const char* wsod_version(void) { return "1.0.0"; }

const char* wsod_last_error(void) { return last_error.c_str(); }

const char* wsod_status_name(wsod_status status) {
  switch (status) {
    case WSOD_OK: return "ok";
    case WSOD_ERR_INTERNAL: return "internal error";
    case WSOD_ERR_CONFIG: return "config error";
    case WSOD_ERR_DATA: return "data error";
    case WSOD_ERR_SHAPE: return "shape error";
    case WSOD_ERR_NUMERIC: return "numeric error";
    case WSOD_ERR_IO: return "io error";
    case WSOD_ERR_CHECKPOINT: return "checkpoint error";
    case WSOD_ERR_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

void wsod_string_free(char* s) { std::free(s); }

wsod_status wsod_config_new(wsod_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new wsod_config{};
  });
}

wsod_status wsod_config_load(const char* path, wsod_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wsod_config{wsod::RunConfig::from_file(path)};
  });
}

wsod_status wsod_config_set(wsod_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->value.set(key, value);
  });
}

wsod_status wsod_config_apply_env(wsod_config* cfg) {
  return guard([&] {
    require(cfg, "config");
    if (const char* s = std::getenv("WSOD_SEED")) {
      try {
        cfg->value.set("seed", s);
      } catch (const wsod::Error& e) {
        throw wsod::Error(wsod::ErrorKind::config, std::string("WSOD_SEED: ") + e.what());
      }
    }
  });
}

wsod_status wsod_config_validate(const wsod_config* cfg) {
  return guard([&] {
    require(cfg, "config");
    cfg->value.validate();
  });
}

wsod_status wsod_config_to_json(const wsod_config* cfg, char** out) {
  return guard([&] {
    require(cfg, "config");
    require(out, "out");
    *out = dup(cfg->value.to_json());
  });
}

wsod_status wsod_config_seed(const wsod_config* cfg, uint64_t* out) {
  return guard([&] {
    require(cfg, "config");
    require(out, "out");
    *out = cfg->value.seed;
  });
}

wsod_status wsod_config_get(const wsod_config* cfg, const char* key, char** out) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(out, "out");
    std::string pointer = "/" + std::string(key);
    for (char& ch : pointer)
      if (ch == '.') ch = '/';
    const nlohmann::json j = nlohmann::json::parse(cfg->value.to_json());
    const nlohmann::json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw wsod::Error(wsod::ErrorKind::config, std::string("unknown config key '") + key + "'");
    *out = dup(j.at(ptr).dump());
  });
}

void wsod_config_free(wsod_config* cfg) { delete cfg; }

wsod_status wsod_vocab_load(const char* path, wsod_vocab** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wsod_vocab{wsod::load_vocabulary(path)};
  });
}

wsod_status wsod_vocab_save(const wsod_vocab* vocab, const char* path) {
  return guard([&] {
    require(vocab, "vocab");
    require(path, "path");
    wsod::save_vocabulary(path, vocab->value);
  });
}

size_t wsod_vocab_size(const wsod_vocab* vocab) { return vocab ? vocab->value.size() : 0; }

void wsod_vocab_free(wsod_vocab* vocab) { delete vocab; }

wsod_status wsod_dataset_load(const char* path, const wsod_vocab* vocab, wsod_dataset** out) {
  return guard([&] {
    require(path, "path");
    require(vocab, "vocab");
    require(out, "out");
    *out = new wsod_dataset{wsod::load_dataset(path, vocab->value)};
  });
}

wsod_status wsod_dataset_save(const wsod_dataset* data, const char* path) {
  return guard([&] {
    require(data, "dataset");
    require(path, "path");
    wsod::save_dataset(path, data->value);
  });
}

size_t wsod_dataset_size(const wsod_dataset* data) { return data ? data->value.size() : 0; }

wsod_status wsod_generate_synthetic(const wsod_config* cfg, uint64_t seed, wsod_dataset** data_out,
                                    wsod_vocab** vocab_out) {
  return guard([&] {
    require(cfg, "config");
    require(data_out, "data_out");
    wsod::SyntheticDataset s = wsod::generate_synthetic(cfg->value.synthetic, seed);
    auto data = std::make_unique<wsod_dataset>(wsod_dataset{std::move(s.records)});
    if (vocab_out) *vocab_out = new wsod_vocab{std::move(s.vocab)};
    *data_out = data.release();
  });
}

wsod_status wsod_dataset_extract_labels(wsod_dataset* data, const wsod_vocab* vocab, size_t* labeled) {
  return guard([&] {
    require(data, "dataset");
    require(vocab, "vocab");
    size_t n = 0;
    for (wsod::ImageRecord& rec : data->value) {
      rec.labels = wsod::training_labels(rec, vocab->value, wsod::LabelSource::extracted);
      if (!rec.labels->empty()) ++n;
    }
    if (labeled) *labeled = n;
  });
}

void wsod_dataset_free(wsod_dataset* data) { delete data; }

wsod_status wsod_detections_load(const char* path, wsod_detections** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wsod_detections{wsod::load_detections(path)};
  });
}

wsod_status wsod_detections_save(const wsod_detections* dets, const char* path) {
  return guard([&] {
    require(dets, "detections");
    require(path, "path");
    wsod::save_detections(path, dets->value);
  });
}

size_t wsod_detections_size(const wsod_detections* dets) { return dets ? dets->value.size() : 0; }

wsod_status wsod_detections_get(const wsod_detections* dets, size_t index, wsod_detection* out) {
  return guard([&] {
    require(dets, "detections");
    require(out, "out");
    if (index >= dets->value.size())
      throw ArgumentError("detection index out of range");
    const wsod::Detection& d = dets->value[index];
    out->image_id = d.image_id.c_str();
    out->class_id = d.class_id;
    out->box[0] = d.box.x1;
    out->box[1] = d.box.y1;
    out->box[2] = d.box.x2;
    out->box[3] = d.box.y2;
    out->score = d.confidence;
  });
}

void wsod_detections_free(wsod_detections* dets) { delete dets; }

wsod_status wsod_priors_estimate(const wsod_dataset* data, const wsod_detections* predictions,
                                 const wsod_config* cfg, const wsod_vocab* vocab, wsod_priors** out,
                                 char** summary_json) {
  return guard([&] {
    require(data, "dataset");
    require(predictions, "predictions");
    require(cfg, "config");
    require(out, "out");
    const wsod::RunConfig& c = cfg->value;
    const wsod::PriorEstimate est = wsod::estimate_priors(
        data->value, predictions->value,
        wsod::PriorConfig{c.prior_score_threshold, c.prior_min_count_word, c.prior_min_count_class});
    auto priors = std::make_unique<wsod_priors>(wsod_priors{est.priors});
    give(summary_json, wsod::coverage_to_json(est, vocab ? &vocab->value : nullptr));
    *out = priors.release();
  });
}

wsod_status wsod_priors_load(const char* path, wsod_priors** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wsod_priors{wsod::load_priors(path)};
  });
}

wsod_status wsod_priors_save(const wsod_priors* priors, const char* path) {
  return guard([&] {
    require(priors, "priors");
    require(path, "path");
    wsod::save_priors(path, priors->value);
  });
}

void wsod_priors_free(wsod_priors* priors) { delete priors; }

wsod_status wsod_train(const wsod_config* cfg, const wsod_dataset* data, const wsod_vocab* vocab,
                       const wsod_priors* priors, const wsod_dataset* eval_data, wsod_model** model_out,
                       char** report_json) {
  return guard([&] {
    require(cfg, "config");
    require(data, "dataset");
    require(vocab, "vocab");
    require(model_out, "model_out");
    wsod::TrainResult r = wsod::train(cfg->value, data->value, vocab->value, priors ? &priors->value : nullptr,
                                      eval_data ? &eval_data->value : nullptr);
    auto model = std::make_unique<wsod_model>(wsod_model{std::move(r.model)});
    give(report_json, r.report.to_json(&vocab->value));
    *model_out = model.release();
  });
}

wsod_status wsod_model_load(const char* path, wsod_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new wsod_model{wsod::load_model(path)};
  });
}

wsod_status wsod_model_save(wsod_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    wsod::save_model(path, model->value);
  });
}

void wsod_model_free(wsod_model* model) { delete model; }

wsod_status wsod_parse_mode(const char* name, wsod_mode* out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    const auto m = wsod::parse_fusion_mode(name);
    if (!m) throw wsod::Error(wsod::ErrorKind::config, std::string("unknown inference mode '") + name + "'");
    switch (*m) {
      case wsod::FusionMode::rgb_only: *out = WSOD_MODE_RGB; break;
      case wsod::FusionMode::fused: *out = WSOD_MODE_FUSED; break;
      case wsod::FusionMode::depth_only: *out = WSOD_MODE_DEPTH; break;
    }
  });
}

wsod_status wsod_infer(const wsod_model* model, const wsod_dataset* data, const wsod_config* cfg, wsod_mode mode,
                       wsod_detections** out) {
  return guard([&] {
    require(model, "model");
    require(data, "dataset");
    require(cfg, "config");
    require(out, "out");
    const wsod::RunConfig& c = cfg->value;
    *out = new wsod_detections{wsod::infer(model->value, data->value, to_mode(mode), c.infer_min_score,
                                           c.eval.nms_thresh, c.sigma_on_sum)};
  });
}

wsod_status wsod_evaluate(const wsod_detections* dets, const wsod_dataset* data, const wsod_config* cfg,
                          const wsod_vocab* vocab, char** report_json, char** table) {
  return guard([&] {
    require(dets, "detections");
    require(data, "dataset");
    require(cfg, "config");
    const wsod::EvalReport report = wsod::evaluate(dets->value, data->value, cfg->value.eval);
    const std::string j = wsod::report_to_json(report, vocab ? &vocab->value : nullptr);
    const std::string t = wsod::report_table(report);
    give(report_json, j);
    give(table, t);
  });
}

wsod_status wsod_ablation(const wsod_config* cfg, const wsod_dataset* data, const wsod_vocab* vocab,
                          const wsod_dataset* eval_data, const wsod_priors* priors, char** result_json,
                          char** table) {
  return guard([&] {
    require(cfg, "config");
    require(data, "dataset");
    require(vocab, "vocab");
    require(eval_data, "eval_data");
    const wsod::AblationResult r = wsod::run_ablation(cfg->value, data->value, vocab->value, eval_data->value,
                                                      priors ? &priors->value : nullptr);
    give(result_json, r.to_json());
    give(table, r.table());
  });
}

}  // extern "C"
