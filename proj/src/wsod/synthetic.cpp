#include "wsod/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "wsod/error.hpp"
#include "wsod/evald.hpp"
#include "wsod/rng.hpp"

namespace wsod {

namespace {

struct ClassSeed {
  const char* name;
  const char* plural;
  std::array<const char*, 3> words;  // near, middle, far
};

constexpr std::array<ClassSeed, 10> kClasses{{
    {"bird", "birds", {"feeding", "perched", "flying"}},
    {"dog", "dogs", {"lap", "yard", "field"}},
    {"car", "cars", {"driveway", "street", "highway"}},
    {"boat", "boats", {"dock", "harbor", "ocean"}},
    {"chair", "chairs", {"desk", "room", "patio"}},
    {"horse", "horses", {"stable", "paddock", "pasture"}},
    {"bottle", "bottles", {"hand", "table", "shelf"}},
    {"person", "people", {"selfie", "crowd", "distance"}},
    {"cat", "cats", {"couch", "window", "roof"}},
    {"cow", "cows", {"barn", "meadow", "hillside"}},
}};

constexpr int kDefaultWords = 3;

std::string class_name(int c) {
  if (c < static_cast<int>(kClasses.size())) return kClasses[c].name;
  return "class" + std::to_string(c);
}

std::string class_plural(int c) {
  if (c < static_cast<int>(kClasses.size())) return kClasses[c].plural;
  return "class" + std::to_string(c) + "s";
}

std::vector<double> unit_vector(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

Box clip(Box b, double w, double h) {
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.x2 = std::clamp(b.x2, 0.0, w);
  b.y1 = std::clamp(b.y1, 0.0, h);
  b.y2 = std::clamp(b.y2, 0.0, h);
  return b;
}

Box random_box(Rng& rng, double w, double h, double min_frac, double max_frac) {
  const double bw = rng.uniform(min_frac, max_frac) * w;
  const double bh = rng.uniform(min_frac, max_frac) * h;
  const double x1 = rng.uniform(0.0, w - bw);
  const double y1 = rng.uniform(0.0, h - bh);
  return Box{x1, y1, x1 + bw, y1 + bh};
}

double max_iou(const Box& b, const std::vector<GtBox>& gts) {
  double best = 0.0;
  for (const GtBox& g : gts) best = std::max(best, iou(b, g.box));
  return best;
}

// Uniform over [0, lo) U (hi, 1]; falls back to the band when it covers [0, 1].
double outside_band(Rng& rng, double lo, double hi) {
  const double below = std::max(0.0, lo);
  const double above = std::max(0.0, 1.0 - hi);
  if (below + above <= 0.0) return rng.uniform(std::max(0.0, lo), std::min(1.0, hi));
  const double u = rng.uniform(0.0, below + above);
  return u < below ? u : hi + (u - below);
}

enum class Role { object, context, background };

}  // namespace

ClassVocabulary synthetic_vocabulary(int num_classes) {
  std::vector<ClassEntry> entries;
  for (int c = 0; c < num_classes; ++c) entries.push_back({c, class_name(c), {class_plural(c)}});
  return ClassVocabulary(std::move(entries));
}

SyntheticConfig resolve_synthetic_config(SyntheticConfig cfg) {
  if (cfg.num_classes < 1) fail(ErrorKind::config, "synthetic: num_classes must be >= 1");
  if (cfg.num_images < 1) fail(ErrorKind::config, "synthetic: num_images must be >= 1");
  if (cfg.proposals_per_image < 2) fail(ErrorKind::config, "synthetic: proposals_per_image must be >= 2");
  if (cfg.feat_dim < 1) fail(ErrorKind::config, "synthetic: feat_dim must be >= 1");
  if (cfg.image_width < 8 || cfg.image_height < 8) fail(ErrorKind::config, "synthetic: image too small");
  if (cfg.max_objects < 1) fail(ErrorKind::config, "synthetic: max_objects must be >= 1");
  if (cfg.true_proposals_per_object < 1) fail(ErrorKind::config, "synthetic: need >= 1 true proposal per object");
  if (cfg.context_proposals_per_object < 0) fail(ErrorKind::config, "synthetic: negative context proposal count");
  if (!(cfg.noise >= 0) || !(cfg.caption_noise >= 0 && cfg.caption_noise <= 1) ||
      !(cfg.distractor_out_of_band >= 0 && cfg.distractor_out_of_band <= 1))
    fail(ErrorKind::config, "synthetic: noise levels out of range");

  const int C = cfg.num_classes;
  if (cfg.depth_bands.empty()) {
    for (int c = 0; c < C; ++c) {
      const double center = C == 1 ? 0.5 : 0.15 + 0.7 * c / (C - 1);
      cfg.depth_bands.emplace_back(center - 0.12, center + 0.12);
    }
  }
  if (static_cast<int>(cfg.depth_bands.size()) != C)
    fail(ErrorKind::config, "synthetic: depth_bands must have one entry per class");
  for (const auto& [lo, hi] : cfg.depth_bands)
    if (!(lo < hi) || lo < 0.0 || hi > 1.0) fail(ErrorKind::config, "synthetic: empty or out-of-range depth band");

  if (cfg.context_words.empty()) {
    for (int c = 0; c < C; ++c) {
      std::vector<std::string> words;
      for (int k = 0; k < kDefaultWords; ++k) {
        if (c < static_cast<int>(kClasses.size()))
          words.emplace_back(kClasses[c].words[k]);
        else
          words.push_back("ctx" + std::to_string(c) + "w" + std::to_string(k));
      }
      cfg.context_words.push_back(std::move(words));
    }
  }
  if (static_cast<int>(cfg.context_words.size()) != C)
    fail(ErrorKind::config, "synthetic: context_words must have one list per class");
  for (const auto& words : cfg.context_words)
    if (words.empty()) fail(ErrorKind::config, "synthetic: every class needs >= 1 context word");
  return cfg;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  const SyntheticConfig cfg = resolve_synthetic_config(config);
  const int C = cfg.num_classes;
  const int R = cfg.proposals_per_image;
  const int D = cfg.feat_dim;
  const double W = cfg.image_width;
  const double H = cfg.image_height;

  SyntheticDataset out{synthetic_vocabulary(C), {}, {}, cfg.depth_bands};
  Rng rng(seed);

  std::vector<std::vector<double>> object_proto, context_proto, depth_proto;
  Rng world(cfg.world_seed ^ 0xa0761d6478bd642fULL);
  for (int c = 0; c < C; ++c) {
    object_proto.push_back(unit_vector(world, D));
    context_proto.push_back(unit_vector(world, D));
    depth_proto.push_back(unit_vector(world, D));
  }

  for (int n = 0; n < cfg.num_images; ++n) {
    ImageRecord rec;
    char id[64];
    std::snprintf(id, sizeof id, "syn%llu_%05d", static_cast<unsigned long long>(seed), n);
    rec.image_id = id;
    rec.width = cfg.image_width;
    rec.height = cfg.image_height;

    // Distinct object classes for this image.
    const int max_k = std::min({cfg.max_objects, C, R});
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_k)));
    std::vector<int> classes(C);
    for (int c = 0; c < C; ++c) classes[c] = c;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(C - i)));
      std::swap(classes[i], classes[j]);
    }
    classes.resize(k);

    std::vector<GtBox> gts;
    std::vector<int> words;
    std::vector<double> depths;
    for (int c : classes) {
      gts.push_back(GtBox{random_box(rng, W, H, 0.2, 0.5), c});
      const auto [lo, hi] = cfg.depth_bands[c];
      const int K = static_cast<int>(cfg.context_words[c].size());
      const int w = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
      const double slice = (hi - lo) / K;
      words.push_back(w);
      depths.push_back(rng.uniform(lo + w * slice, lo + (w + 1) * slice));
    }

    // Proposal budget: one true proposal per object first, then the remaining
    // true proposals, then context distractors, then background.
    struct Plan {
      Role role;
      int object;
    };
    std::vector<Plan> plan;
    for (int o = 0; o < k && static_cast<int>(plan.size()) < R; ++o) plan.push_back({Role::object, o});
    for (int t = 1; t < cfg.true_proposals_per_object; ++t)
      for (int o = 0; o < k && static_cast<int>(plan.size()) < R; ++o) plan.push_back({Role::object, o});
    for (int t = 0; t < cfg.context_proposals_per_object; ++t)
      for (int o = 0; o < k && static_cast<int>(plan.size()) < R; ++o) plan.push_back({Role::context, o});
    while (static_cast<int>(plan.size()) < R) plan.push_back({Role::background, -1});

    struct Proposal {
      Box box;
      std::vector<double> rgb, depth;
      double pd;
    };
    std::vector<Proposal> props;
    const double jitter = 0.05 * cfg.noise;
    for (const Plan& p : plan) {
      Proposal prop;
      prop.rgb.assign(D, 0.0);
      prop.depth.assign(D, 0.0);
      if (p.role == Role::object) {
        const Box& g = gts[p.object].box;
        prop.box = g;
        for (int attempt = 0; attempt < 50; ++attempt) {
          const double dw = 0.1 * g.width(), dh = 0.1 * g.height();
          const Box cand = clip(Box{g.x1 + rng.uniform(-dw, dw), g.y1 + rng.uniform(-dh, dh),
                                    g.x2 + rng.uniform(-dw, dw), g.y2 + rng.uniform(-dh, dh)},
                                W, H);
          if (cand.valid() && iou(cand, g) >= 0.6) {
            prop.box = cand;
            break;
          }
        }
        const int c = gts[p.object].class_id;
        const auto [lo, hi] = cfg.depth_bands[c];
        prop.pd = std::clamp(depths[p.object] + jitter * rng.normal(), 0.0, 1.0);
        ++out.stats.true_proposals;
        if (prop.pd >= lo && prop.pd <= hi) ++out.stats.true_in_band;
        for (int d = 0; d < D; ++d) {
          prop.rgb[d] = cfg.signal_strength * object_proto[c][d];
          prop.depth[d] = cfg.depth_signal_strength * depth_proto[c][d];
        }
      } else {
        const double max_overlap = p.role == Role::context ? 0.3 : 0.5;
        for (int attempt = 0; attempt < 100; ++attempt) {
          prop.box = p.role == Role::context ? random_box(rng, W, H, 0.1, 0.4)
                                              : random_box(rng, W, H, 0.05, 0.5);
          if (max_iou(prop.box, gts) < max_overlap) break;
        }
        if (p.role == Role::context) {
          const int c = gts[p.object].class_id;
          const auto [lo, hi] = cfg.depth_bands[c];
          prop.pd = rng.bernoulli(cfg.distractor_out_of_band) ? outside_band(rng, lo, hi)
                                                              : rng.uniform(lo, hi);
          for (int d = 0; d < D; ++d) prop.rgb[d] = cfg.context_strength * context_proto[c][d];
        } else {
          prop.pd = rng.uniform();
        }
      }
      for (int d = 0; d < D; ++d) {
        prop.rgb[d] += cfg.noise * rng.normal();
        prop.depth[d] += cfg.noise * rng.normal();
      }
      props.push_back(std::move(prop));
    }
    rng.shuffle(props);

    rec.rgb_features = Matrix(R, D);
    rec.depth_features = Matrix(R, D);
    for (int i = 0; i < R; ++i) {
      rec.proposals.push_back(props[i].box);
      rec.proposal_depths.push_back(props[i].pd);
      for (int d = 0; d < D; ++d) {
        rec.rgb_features(i, d) = props[i].rgb[d];
        rec.depth_features(i, d) = props[i].depth[d];
      }
    }

    // Caption: one mention per object with its context word; a noisy caption
    // either drops one class mention or names an absent class.
    std::vector<bool> mention(k, true);
    int extra_class = -1;
    if (rng.bernoulli(cfg.caption_noise)) {
      if (k == C || rng.bernoulli(0.5)) {
        mention[rng.below(static_cast<std::uint64_t>(k))] = false;
      } else {
        std::vector<int> absent;
        for (int c = 0; c < C; ++c)
          if (std::find(classes.begin(), classes.end(), c) == classes.end()) absent.push_back(c);
        extra_class = absent[rng.below(absent.size())];
      }
    }
    std::string caption;
    for (int o = 0; o < k; ++o) {
      const int c = gts[o].class_id;
      const bool plural = rng.bernoulli(0.3);
      if (!caption.empty()) caption += " and ";
      if (mention[o])
        caption += (plural ? "some " + class_plural(c) : "a " + class_name(c)) + " ";
      else
        caption += "something ";
      caption += cfg.context_words[c][words[o]];
    }
    if (extra_class >= 0) caption += " with a " + class_name(extra_class);
    caption += " in the photo";
    rec.caption = caption;

    std::vector<int> labels(classes.begin(), classes.end());
    std::sort(labels.begin(), labels.end());
    rec.labels = labels;
    rec.gt_boxes = gts;
    validate_record(rec, static_cast<std::size_t>(C));
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace wsod
