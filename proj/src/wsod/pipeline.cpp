#include "wsod/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "wsod/error.hpp"
#include "wsod/rng.hpp"

namespace wsod {

using nlohmann::json;

ObjectiveOptions ObjectiveOptions::from_config(const RunConfig& c) {
  ObjectiveOptions o;
  o.fusion = c.fusion;
  o.nce = c.siamese_nce && c.w_nce > 0.0;
  o.depth_oicr = c.depth_oicr;
  o.depth_attention = c.depth_attention;
  o.refine = c.refine_branches > 0 && c.w_ref > 0.0;
  o.sigma_on_sum = c.sigma_on_sum;
  o.w_mil = c.w_mil;
  o.w_nce = c.w_nce;
  o.w_ref = c.w_ref;
  o.attention_factor = c.attention_factor;
  o.mining = MiningOptions{c.refine_iou_thresh, c.refine_score_ratio};
  o.refine_iou_thresh = c.refine_iou_thresh;
  o.nce_options.include_positive_in_sum = c.nce_include_positive_in_sum;
  return o;
}

namespace {

struct ImageState {
  Matrix hv, hd;    // trunk outputs
  Matrix dhv, dhd;  // gradients w.r.t. trunk outputs
};

void scale(Matrix& m, double k) {
  for (double& v : m.data()) v *= k;
}

void multiply(Matrix& m, const Matrix& w) {
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] *= w.data()[k];
}

Matrix first_columns(const Matrix& m, std::size_t n) {
  Matrix out(m.rows(), n);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < n; ++c) out(i, c) = m(i, c);
  return out;
}

// MIL and refinement terms of one image; returns (mil, refine).
std::pair<double, double> image_objective(ModelParams& model, const TrainItem& item, ImageState& st,
                                          const ObjectiveOptions& o, bool backward, double weight,
                                          MiningTally& tally) {
  const ImageRecord& rec = *item.record;
  const std::size_t C = model.rgb.num_classes();

  RawScores s = score(st.hv, model.rgb);
  if (o.fusion) s = fuse(s, score(st.hd, model.depth));
  const ScorePack pack = probabilities(s.det, s.cls);

  const bool attend = o.depth_attention && item.mask.has_value();
  Matrix att;
  Matrix p = pack.p_comb;
  if (attend) {
    att = attention_weights(*item.mask, o.attention_factor);
    multiply(p, att);
  }
  const std::vector<double> p_hat = image_prediction(p, o.sigma_on_sum);
  const double mil = mil_loss(p_hat, item.labels);

  if (backward && o.w_mil > 0.0) {
    std::vector<double> dp_hat = mil_loss_backward(p_hat, item.labels);
    for (double& g : dp_hat) g *= o.w_mil * weight;
    Matrix dp = image_prediction_backward(p, dp_hat, o.sigma_on_sum);
    if (attend) multiply(dp, att);
    const RawScores draw = probabilities_backward(pack, dp);
    score_backward(st.hv, model.rgb, draw, &st.dhv);
    if (o.fusion) score_backward(st.hd, model.depth, draw, &st.dhd);
  }

  double ref = 0.0;
  if (o.refine && !item.labels.empty()) {
    const DepthMask* mask = (o.depth_oicr && item.mask) ? &*item.mask : nullptr;
    Matrix supervision = pack.p_comb;
    for (std::size_t k = 0; k < model.branches.size(); ++k) {
      RefineBranch& branch = model.branches[k];
      const PseudoBoxSet pseudo = mine(rec.proposals, supervision, mask, item.labels, o.mining);
      if (k == 0) tally.merge(mining_tally(pseudo, rec));
      const RefineTargets targets = refinement_targets(rec.proposals, pseudo, C, o.refine_iou_thresh);
      const Matrix scores = affine(st.hv, branch.w.value, branch.b.value);
      Matrix dscores;
      ref += refinement_loss(scores, targets, backward ? &dscores : nullptr);
      if (backward) {
        scale(dscores, o.w_ref * weight);
        affine_backward(st.hv, branch.w.value, dscores, &st.dhv, &branch.w.grad, &branch.b.grad);
      }
      supervision = first_columns(softmax_rows(scores), C);
    }
  }
  return {mil, ref};
}

}  // namespace

BatchLoss batch_objective(ModelParams& model, const std::vector<const TrainItem*>& batch,
                          const ObjectiveOptions& o, bool backward) {
  if (batch.empty()) fail(ErrorKind::shape, "batch_objective: empty batch");
  const std::size_t B = batch.size();
  const double weight = 1.0 / static_cast<double>(B);
  const bool use_depth = o.fusion || o.nce;
  const bool nce_active = o.nce && B >= 2;

  std::vector<ImageState> states(B);
  for (std::size_t b = 0; b < B; ++b) {
    const ImageRecord& rec = *batch[b]->record;
    ImageState& st = states[b];
    st.hv = trunk_forward(model, rec.rgb_features);
    st.dhv = Matrix(st.hv.rows(), st.hv.cols());
    if (use_depth) {
      st.hd = trunk_forward(model, rec.depth_features);
      st.dhd = Matrix(st.hd.rows(), st.hd.cols());
    }
  }

  BatchLoss loss;
  for (std::size_t b = 0; b < B; ++b) {
    const auto [mil, ref] = image_objective(model, *batch[b], states[b], o, backward, weight, loss.tally);
    loss.mil += mil * weight;
    loss.refine += ref * weight;
  }

  if (nce_active) {
    const std::size_t d = states[0].hv.cols();
    Matrix pooled_v(B, d), pooled_d(B, d);
    for (std::size_t b = 0; b < B; ++b) {
      const Matrix mv = row_means(states[b].hv);
      const Matrix md = row_means(states[b].hd);
      for (std::size_t k = 0; k < d; ++k) {
        pooled_v(b, k) = mv(0, k);
        pooled_d(b, k) = md(0, k);
      }
    }
    const Projection pv = project_with_cache(pooled_v, model.proj);
    const Projection pd = project_with_cache(pooled_d, model.proj);
    NceResult r = nce(pv.embedding, pd.embedding, model.proj.temperature(), o.nce_options);
    loss.nce = r.loss;
    if (backward) {
      scale(r.d_rgb, o.w_nce);
      scale(r.d_depth, o.w_nce);
      Matrix dpv(B, d), dpd(B, d);
      project_backward(pooled_v, model.proj, pv, r.d_rgb, &dpv);
      project_backward(pooled_d, model.proj, pd, r.d_depth, &dpd);
      model.proj.rho.grad(0, 0) += o.w_nce * r.d_rho;
      for (std::size_t b = 0; b < B; ++b) {
        ImageState& st = states[b];
        const double inv_r = 1.0 / static_cast<double>(st.hv.rows());
        for (std::size_t i = 0; i < st.hv.rows(); ++i)
          for (std::size_t k = 0; k < d; ++k) {
            st.dhv(i, k) += dpv(b, k) * inv_r;
            st.dhd(i, k) += dpd(b, k) * inv_r;
          }
      }
    }
  }

  if (backward) {
    for (std::size_t b = 0; b < B; ++b) {
      const ImageRecord& rec = *batch[b]->record;
      affine_backward(rec.rgb_features, model.trunk_w.value, states[b].dhv, nullptr, &model.trunk_w.grad,
                      &model.trunk_b.grad);
      if (use_depth)
        affine_backward(rec.depth_features, model.trunk_w.value, states[b].dhd, nullptr, &model.trunk_w.grad,
                        &model.trunk_b.grad);
    }
  }

  loss.total = o.w_mil * loss.mil + (o.nce ? o.w_nce * loss.nce : 0.0) + (o.refine ? o.w_ref * loss.refine : 0.0);
  return loss;
}

std::vector<int> training_labels(const ImageRecord& record, const ClassVocabulary& vocab, LabelSource source) {
  if (source == LabelSource::extracted) {
    if (!record.caption) return {};
    return extract_labels(*record.caption, vocab);
  }
  if (record.labels) return *record.labels;
  std::set<int> classes;
  if (record.gt_boxes)
    for (const GtBox& g : *record.gt_boxes) classes.insert(g.class_id);
  return {classes.begin(), classes.end()};
}

std::vector<std::vector<std::size_t>> epoch_orders(std::size_t n, int epochs, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<std::vector<std::size_t>> out;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    out.push_back(order);
  }
  return out;
}

TrainResult train(const RunConfig& config, const Dataset& dataset, const ClassVocabulary& vocab,
                  const FrozenPriors* priors, const Dataset* eval_set) {
  config.validate();
  if (config.needs_priors() && !priors)
    fail(ErrorKind::config, "depth_oicr / depth_attention need depth priors (--priors)");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t C = vocab.size();
  if (C == 0) fail(ErrorKind::data, "empty class vocabulary");

  RunReport report;
  report.seed = config.seed;
  report.config_json = config.to_json();

  std::vector<TrainItem> items;
  for (const ImageRecord& rec : dataset) {
    TrainItem item;
    item.record = &rec;
    item.labels = training_labels(rec, vocab, config.label_source);
    if (item.labels.empty()) {
      ++report.skipped_unlabeled;
      continue;
    }
    if (priors && config.needs_priors()) item.mask = depth_mask(rec, *priors, C, config.prior_use_captions);
    items.push_back(std::move(item));
  }
  if (items.empty()) fail(ErrorKind::data, "no labeled images to train on");
  report.train_images = items.size();

  ModelDims dims;
  dims.feat_dim = items.front().record->rgb_features.cols();
  dims.num_classes = C;
  dims.proj_dim = config.proj_dim;
  dims.branches = static_cast<std::size_t>(config.refine_branches);
  TrainResult result{ModelParams::create(dims, config.seed, config.rho_init, config.init_std), {}};
  ModelParams& model = result.model;

  const ObjectiveOptions options = ObjectiveOptions::from_config(config);
  Sgd sgd(config.lr, config.momentum);
  const ParamList params = model.params();
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_images);

  for (const auto& order : epoch_orders(items.size(), config.epochs, config.seed)) {
    EpochStats stats;
    MiningTally tally;
    std::size_t batches = 0;
    for (std::size_t start_i = 0; start_i < order.size(); start_i += batch_size) {
      std::vector<const TrainItem*> batch;
      for (std::size_t j = start_i; j < std::min(order.size(), start_i + batch_size); ++j)
        batch.push_back(&items[order[j]]);
      const BatchLoss bl = batch_objective(model, batch, options, true);
      if (!std::isfinite(bl.total)) fail(ErrorKind::numeric, "nonfinite training loss");
      sgd.step(params);
      model.proj.clamp_temperature();
      const double share = static_cast<double>(batch.size());
      stats.mil += bl.mil * share;
      stats.refine += bl.refine * share;
      stats.nce += bl.nce;
      tally.merge(bl.tally);
      ++batches;
    }
    const double n = static_cast<double>(items.size());
    stats.mil /= n;
    stats.refine /= n;
    stats.nce /= static_cast<double>(batches);
    stats.total = options.w_mil * stats.mil + (options.nce ? options.w_nce * stats.nce : 0.0) +
                  (options.refine ? options.w_ref * stats.refine : 0.0);
    stats.mining_precision = tally.precision();
    stats.pseudo_boxes = tally.pseudo_boxes;
    report.epochs.push_back(stats);
  }

  if (eval_set) {
    const auto dets = raw_detections(model, *eval_set, config.infer_mode, config.infer_min_score, config.sigma_on_sum);
    report.eval = evaluate(dets, *eval_set, config.eval);
  }
  if (config.report_timing)
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.report = std::move(report);
  return result;
}

std::vector<Detection> raw_detections(const ModelParams& model, const Dataset& dataset, FusionMode mode,
                                      double min_score, bool sigma_on_sum) {
  const std::size_t C = model.rgb.num_classes();
  std::vector<Detection> dets;
  for (const ImageRecord& rec : dataset) {
    const ScorePack pack = forward(rec, model, mode, sigma_on_sum);
    for (std::size_t i = 0; i < rec.num_proposals(); ++i)
      for (std::size_t c = 0; c < C; ++c) {
        const double conf = pack.p_comb(i, c);
        if (conf > min_score) dets.push_back(Detection{rec.image_id, static_cast<int>(c), rec.proposals[i], conf});
      }
  }
  return dets;
}

std::vector<Detection> infer(const ModelParams& model, const Dataset& dataset, FusionMode mode, double min_score,
                             double nms_thresh, bool sigma_on_sum) {
  return nms(raw_detections(model, dataset, mode, min_score, sigma_on_sum), nms_thresh);
}

std::string RunReport::to_json(const ClassVocabulary* vocab) const {
  json j;
  j["seed"] = seed;
  j["config"] = json::parse(config_json);
  j["train_images"] = train_images;
  j["skipped_unlabeled"] = skipped_unlabeled;
  json ep = json::array();
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const EpochStats& s = epochs[e];
    ep.push_back({{"epoch", e + 1},
                  {"mil", s.mil},
                  {"nce", s.nce},
                  {"refine", s.refine},
                  {"total", s.total},
                  {"mining_precision", s.mining_precision},
                  {"pseudo_boxes", s.pseudo_boxes}});
  }
  j["epochs"] = ep;
  j["eval"] = eval ? json::parse(report_to_json(*eval, vocab)) : json(nullptr);
  if (wall_seconds) j["wall_seconds"] = *wall_seconds;
  return j.dump(2) + "\n";
}

std::vector<std::string> ablation_row_names() {
  return {"Baseline", "Siamese-Only", "Depth-Oicr", "Depth-Attention", "Fusion", "Wsod-Amplifier"};
}

RunConfig ablation_config(const RunConfig& base, const std::string& row) {
  const auto names = ablation_row_names();
  if (std::find(names.begin(), names.end(), row) == names.end())
    fail(ErrorKind::config, "unknown ablation row " + row);
  RunConfig c = base;
  c.siamese_nce = row != "Baseline";
  c.depth_oicr = row == "Depth-Oicr" || row == "Wsod-Amplifier";
  c.depth_attention = row == "Depth-Attention" || row == "Wsod-Amplifier";
  c.fusion = row == "Fusion" || row == "Wsod-Amplifier";
  return c;
}

AblationResult run_ablation(const RunConfig& config, const Dataset& dataset, const ClassVocabulary& vocab,
                            const Dataset& eval_set, const FrozenPriors* priors) {
  AblationResult out;
  FrozenPriors estimated;
  for (const std::string& name : ablation_row_names()) {
    const RunConfig rc = ablation_config(config, name);
    const FrozenPriors* use = priors ? priors : (out.estimated_priors ? &estimated : nullptr);
    TrainResult tr = train(rc, dataset, vocab, rc.needs_priors() ? use : nullptr, &eval_set);
    if (name == "Baseline" && !priors) {
      const auto preds = infer(tr.model, dataset, FusionMode::rgb_only, 0.0, rc.eval.nms_thresh, rc.sigma_on_sum);
      PriorConfig pc{rc.prior_score_threshold, rc.prior_min_count_word, rc.prior_min_count_class};
      out.estimated_priors = estimate_priors(dataset, preds, pc);
      estimated = out.estimated_priors->priors;
    }
    AblationRow row;
    row.name = name;
    row.eval = *tr.report.eval;
    row.mining_precision = tr.report.epochs.back().mining_precision;
    row.final_loss = tr.report.epochs.back().total;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string AblationResult::to_json() const {
  json rows_j = json::array();
  for (const AblationRow& r : rows)
    rows_j.push_back({{"name", r.name},
                      {"map_50_95", 100.0 * r.eval.map_50_95},
                      {"map_50", 100.0 * r.eval.map_50},
                      {"map_75", 100.0 * r.eval.map_75},
                      {"map_small", 100.0 * r.eval.map_small},
                      {"map_medium", 100.0 * r.eval.map_medium},
                      {"map_large", 100.0 * r.eval.map_large},
                      {"corloc_50", 100.0 * r.eval.corloc_50},
                      {"mining_precision", 100.0 * r.mining_precision},
                      {"final_loss", r.final_loss}});
  json j;
  j["rows"] = rows_j;
  if (estimated_priors) j["estimated_priors"] = json::parse(coverage_to_json(*estimated_priors));
  return j.dump(2) + "\n";
}

std::string AblationResult::table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %8s %8s %8s\n", "method", "AP50:95", "AP50", "AP75",
                "S", "M", "L", "mine");
  out += line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f\n", r.name.c_str(),
                  100.0 * r.eval.map_50_95, 100.0 * r.eval.map_50, 100.0 * r.eval.map_75, 100.0 * r.eval.map_small,
                  100.0 * r.eval.map_medium, 100.0 * r.eval.map_large, 100.0 * r.mining_precision);
    out += line;
  }
  return out;
}

void save_model(const std::string& path, ModelParams& model) { save_checkpoint(path, model.params()); }

ModelParams load_model(const std::string& path) { return ModelParams::from_checkpoint(load_checkpoint(path)); }

}  // namespace wsod
