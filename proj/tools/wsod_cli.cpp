// wsod: command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wsod.h"

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 1 anything else.
int exit_code(wsod_status s) {
  switch (s) {
    case WSOD_OK: return 0;
    case WSOD_ERR_CONFIG: return 2;
    case WSOD_ERR_DATA:
    case WSOD_ERR_IO:
    case WSOD_ERR_CHECKPOINT: return 3;
    default: return 1;
  }
}

struct Failure {
  wsod_status status;
};

void check(wsod_status s, const char* what) {
  if (s == WSOD_OK) return;
  std::fprintf(stderr, "wsod: %s: %s: %s\n", what, wsod_status_name(s), wsod_last_error());
  throw Failure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<wsod_config, Deleter<wsod_config, wsod_config_free>>;
using Vocab = std::unique_ptr<wsod_vocab, Deleter<wsod_vocab, wsod_vocab_free>>;
using Data = std::unique_ptr<wsod_dataset, Deleter<wsod_dataset, wsod_dataset_free>>;
using Priors = std::unique_ptr<wsod_priors, Deleter<wsod_priors, wsod_priors_free>>;
using Model = std::unique_ptr<wsod_model, Deleter<wsod_model, wsod_model_free>>;
using Dets = std::unique_ptr<wsod_detections, Deleter<wsod_detections, wsod_detections_free>>;

// Owned C string.
struct Text {
  char* p = nullptr;
  ~Text() { wsod_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file");
  sub->add_option("--set", c.sets, "Override a config key (key=value), repeatable");
}

Config make_config(const Common& c) {
  wsod_config* raw = nullptr;
  if (c.config_path.empty())
    check(wsod_config_new(&raw), "config");
  else
    check(wsod_config_load(c.config_path.c_str(), &raw), "config");
  Config cfg(raw);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "wsod: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{WSOD_ERR_CONFIG};
    }
    check(wsod_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set");
  }
  check(wsod_config_apply_env(cfg.get()), "environment");
  check(wsod_config_validate(cfg.get()), "config");
  return cfg;
}

Vocab load_vocab(const std::string& path) {
  wsod_vocab* v = nullptr;
  check(wsod_vocab_load(path.c_str(), &v), "vocabulary");
  return Vocab(v);
}

Data load_data(const std::string& path, const wsod_vocab* vocab) {
  wsod_dataset* d = nullptr;
  check(wsod_dataset_load(path.c_str(), vocab, &d), "dataset");
  return Data(d);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::fprintf(stderr, "wsod: cannot write %s\n", path.c_str());
    throw Failure{WSOD_ERR_IO};
  }
}

std::string config_string(const wsod_config* cfg, const char* key) {
  Text t;
  check(wsod_config_get(cfg, key, &t.p), "config");
  std::string s = t.str();
  if (s.size() >= 2 && s.front() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised object detection with depth priors"};
  app.require_subcommand(1);

  Common gen_c, ext_c, pri_c, train_c, infer_c, eval_c, abl_c;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, gen_c);
  std::string gen_out, gen_vocab;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "Output JSON Lines dataset")->required();
  gen->add_option("--vocab-out", gen_vocab, "Output class vocabulary")->required();
  gen->add_option("--data-seed", gen_seed, "Sample seed (default: config seed)");

  auto* ext = app.add_subcommand("extract-labels", "Replace labels with caption matches");
  add_common(ext, ext_c);
  std::string ext_data, ext_vocab, ext_out;
  ext->add_option("--data", ext_data)->required();
  ext->add_option("--vocab", ext_vocab)->required();
  ext->add_option("--out", ext_out)->required();

  auto* pri = app.add_subcommand("estimate-priors", "Estimate depth priors from box predictions");
  add_common(pri, pri_c);
  std::string pri_data, pri_vocab, pri_preds, pri_out, pri_summary;
  pri->add_option("--data", pri_data)->required();
  pri->add_option("--vocab", pri_vocab)->required();
  pri->add_option("--predictions", pri_preds, "Detections JSON Lines")->required();
  pri->add_option("--out", pri_out)->required();
  pri->add_option("--summary", pri_summary, "Write per-class statistics here");

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, train_c);
  std::string tr_data, tr_vocab, tr_priors, tr_eval, tr_out, tr_report;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--vocab", tr_vocab)->required();
  tr->add_option("--priors", tr_priors, "Depth priors (needed for depth_oicr / depth_attention)");
  tr->add_option("--eval-data", tr_eval, "Evaluate the final model on this dataset");
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--report", tr_report, "Run report path (stdout when omitted)");

  auto* inf = app.add_subcommand("infer", "Run inference");
  add_common(inf, infer_c);
  std::string inf_model, inf_data, inf_vocab, inf_out, inf_mode;
  inf->add_option("--model", inf_model)->required();
  inf->add_option("--data", inf_data)->required();
  inf->add_option("--vocab", inf_vocab)->required();
  inf->add_option("--out", inf_out)->required();
  inf->add_option("--inference-mode", inf_mode, "rgb | fused | depth (default: infer.mode)")
      ->check(CLI::IsMember({"rgb", "fused", "depth"}));

  auto* ev = app.add_subcommand("evaluate", "Score detections against ground truth");
  add_common(ev, eval_c);
  std::string ev_dets, ev_data, ev_vocab, ev_report;
  ev->add_option("--detections", ev_dets)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--vocab", ev_vocab)->required();
  ev->add_option("--report", ev_report, "Write the JSON report here");

  auto* ab = app.add_subcommand("ablation", "Train and compare the ablation configurations");
  add_common(ab, abl_c);
  std::string ab_data, ab_vocab, ab_eval, ab_priors, ab_out;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--vocab", ab_vocab)->required();
  ab->add_option("--eval-data", ab_eval)->required();
  ab->add_option("--priors", ab_priors, "Depth priors (estimated from the baseline when omitted)");
  ab->add_option("--out", ab_out, "Write the JSON result here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      Config cfg = make_config(gen_c);
      std::uint64_t seed = 0;
      check(wsod_config_seed(cfg.get(), &seed), "config");
      if (gen_seed) seed = *gen_seed;
      wsod_dataset* d = nullptr;
      wsod_vocab* v = nullptr;
      check(wsod_generate_synthetic(cfg.get(), seed, &d, &v), "gen-data");
      Data data(d);
      Vocab vocab(v);
      check(wsod_dataset_save(data.get(), gen_out.c_str()), "gen-data");
      check(wsod_vocab_save(vocab.get(), gen_vocab.c_str()), "gen-data");
      std::printf("wrote %zu images, %zu classes\n", wsod_dataset_size(data.get()), wsod_vocab_size(vocab.get()));
    } else if (ext->parsed()) {
      Config cfg = make_config(ext_c);
      Vocab vocab = load_vocab(ext_vocab);
      Data data = load_data(ext_data, vocab.get());
      std::size_t labeled = 0;
      check(wsod_dataset_extract_labels(data.get(), vocab.get(), &labeled), "extract-labels");
      check(wsod_dataset_save(data.get(), ext_out.c_str()), "extract-labels");
      std::printf("%zu of %zu images have at least one label\n", labeled, wsod_dataset_size(data.get()));
    } else if (pri->parsed()) {
      Config cfg = make_config(pri_c);
      Vocab vocab = load_vocab(pri_vocab);
      Data data = load_data(pri_data, vocab.get());
      wsod_detections* dr = nullptr;
      check(wsod_detections_load(pri_preds.c_str(), &dr), "predictions");
      Dets preds(dr);
      wsod_priors* pr = nullptr;
      Text summary;
      check(wsod_priors_estimate(data.get(), preds.get(), cfg.get(), vocab.get(), &pr, &summary.p),
            "estimate-priors");
      Priors priors(pr);
      check(wsod_priors_save(priors.get(), pri_out.c_str()), "estimate-priors");
      if (!pri_summary.empty())
        write_text(pri_summary, summary.str());
      else
        std::fputs(summary.str().c_str(), stdout);
    } else if (tr->parsed()) {
      Config cfg = make_config(train_c);
      Vocab vocab = load_vocab(tr_vocab);
      Data data = load_data(tr_data, vocab.get());
      Data eval;
      if (!tr_eval.empty()) eval = load_data(tr_eval, vocab.get());
      Priors priors;
      if (!tr_priors.empty()) {
        wsod_priors* p = nullptr;
        check(wsod_priors_load(tr_priors.c_str(), &p), "priors");
        priors.reset(p);
      }
      wsod_model* m = nullptr;
      Text report;
      check(wsod_train(cfg.get(), data.get(), vocab.get(), priors.get(), eval.get(), &m, &report.p), "train");
      Model model(m);
      check(wsod_model_save(model.get(), tr_out.c_str()), "train");
      if (!tr_report.empty())
        write_text(tr_report, report.str());
      else
        std::fputs(report.str().c_str(), stdout);
    } else if (inf->parsed()) {
      Config cfg = make_config(infer_c);
      if (!inf_mode.empty()) check(wsod_config_set(cfg.get(), "infer.mode", inf_mode.c_str()), "--inference-mode");
      wsod_mode mode = WSOD_MODE_RGB;
      check(wsod_parse_mode(config_string(cfg.get(), "infer.mode").c_str(), &mode), "--inference-mode");
      Vocab vocab = load_vocab(inf_vocab);
      Data data = load_data(inf_data, vocab.get());
      wsod_model* m = nullptr;
      check(wsod_model_load(inf_model.c_str(), &m), "model");
      Model model(m);
      wsod_detections* d = nullptr;
      check(wsod_infer(model.get(), data.get(), cfg.get(), mode, &d), "infer");
      Dets dets(d);
      check(wsod_detections_save(dets.get(), inf_out.c_str()), "infer");
      std::printf("wrote %zu detections\n", wsod_detections_size(dets.get()));
    } else if (ev->parsed()) {
      Config cfg = make_config(eval_c);
      Vocab vocab = load_vocab(ev_vocab);
      Data data = load_data(ev_data, vocab.get());
      wsod_detections* d = nullptr;
      check(wsod_detections_load(ev_dets.c_str(), &d), "detections");
      Dets dets(d);
      Text report, table;
      check(wsod_evaluate(dets.get(), data.get(), cfg.get(), vocab.get(), &report.p, &table.p), "evaluate");
      if (!ev_report.empty()) write_text(ev_report, report.str());
      std::fputs(table.str().c_str(), stdout);
    } else if (ab->parsed()) {
      Config cfg = make_config(abl_c);
      Vocab vocab = load_vocab(ab_vocab);
      Data data = load_data(ab_data, vocab.get());
      Data eval = load_data(ab_eval, vocab.get());
      Priors priors;
      if (!ab_priors.empty()) {
        wsod_priors* p = nullptr;
        check(wsod_priors_load(ab_priors.c_str(), &p), "priors");
        priors.reset(p);
      }
      Text result, table;
      check(wsod_ablation(cfg.get(), data.get(), vocab.get(), eval.get(), priors.get(), &result.p, &table.p),
            "ablation");
      if (!ab_out.empty()) write_text(ab_out, result.str());
      std::fputs(table.str().c_str(), stdout);
    }
  } catch (const Failure& f) {
    return exit_code(f.status);
  }
  return 0;
}
