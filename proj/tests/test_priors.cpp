#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "wsod/error.hpp"
#include "wsod/priors.hpp"

using namespace wsod;

namespace {

ImageRecord record_with_depths(const std::vector<double>& depths, std::optional<std::string> caption = {},
                               const std::string& id = "img") {
  ImageRecord r;
  r.image_id = id;
  r.width = 100;
  r.height = 100;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double x = 5.0 * static_cast<double>(i);
    r.proposals.push_back({x, 0.0, x + 4.0, 10.0});
  }
  r.proposal_depths = depths;
  r.rgb_features = Matrix(depths.size(), 1);
  r.depth_features = Matrix(depths.size(), 1);
  r.caption = std::move(caption);
  return r;
}

// Two-pass population mean and standard deviation.
std::pair<double, double> two_pass(const std::vector<double>& xs) {
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mu) * (x - mu);
  return {mu, std::sqrt(var / static_cast<double>(xs.size()))};
}

FrozenPriors priors_with(std::map<std::pair<int, std::string>, DepthRange> words, std::map<int, DepthRange> classes) {
  // A two-value sample {lo, hi} has mean (lo+hi)/2 and std (hi-lo)/2.
  FrozenPriors f;
  for (const auto& [k, r] : words) f.by_class_word[k] = {2, (r.lo + r.hi) / 2, (r.hi - r.lo) / 2};
  for (const auto& [k, r] : classes) f.by_class[k] = {2, (r.lo + r.hi) / 2, (r.hi - r.lo) / 2};
  return f;
}

}  // namespace

TEST_CASE("accumulate: two boxes, threshold gate and token deduplication") {
  const ImageRecord rec = record_with_depths({0.2, 0.4});
  PriorStats stats;
  accumulate(stats, {rec.proposals[0], 1, 0.9}, rec, 0.5);
  accumulate(stats, {rec.proposals[1], 1, 0.8}, rec, 0.5);
  CHECK(stats.by_class[1].count == 2);
  CHECK(stats.by_class[1].mean() == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(stats.by_class_word.empty());

  accumulate(stats, {rec.proposals[0], 1, 0.4}, rec, 0.5);
  CHECK(stats.by_class[1].count == 2);
  accumulate(stats, {rec.proposals[0], 1, 0.5}, rec, 0.5);
  CHECK(stats.by_class[1].count == 2);

  const ImageRecord cap = record_with_depths({0.3}, "bird bird ocean");
  PriorStats s2;
  accumulate(s2, {cap.proposals[0], 0, 0.9}, cap, 0.5);
  CHECK(s2.by_class_word.at({0, "bird"}).count == 1);
  CHECK(s2.by_class_word.at({0, "ocean"}).count == 1);
  CHECK(s2.by_class.at(0).count == 1);
}

TEST_CASE("accumulate: boxes outside the image are skipped") {
  const ImageRecord rec = record_with_depths({0.2});
  PriorStats stats;
  accumulate(stats, {Box{90, 90, 120, 99}, 0, 0.9}, rec, 0.5);
  CHECK(stats.skipped == 1);
  CHECK(stats.by_class.empty());
}

TEST_CASE("freeze_range: two-pass oracle and thresholds") {
  RunningMoments m;
  m.add(0.2);
  m.add(0.4);
  const auto [mu, sd] = two_pass({0.2, 0.4});
  const auto r = freeze_range(m, 2);
  REQUIRE(r.has_value());
  CHECK(std::abs(r->lo - (mu - sd)) < 1e-6);
  CHECK(std::abs(r->hi - (mu + sd)) < 1e-6);
  CHECK(std::abs(r->lo - 0.2) < 1e-12);
  CHECK(std::abs(r->hi - 0.4) < 1e-12);

  RunningMoments one;
  one.add(0.3);
  CHECK(freeze_range(one, 1) == DepthRange{0.3, 0.3});
  CHECK_FALSE(freeze_range(one, 2).has_value());
  CHECK_FALSE(freeze_range(RunningMoments{}, 1).has_value());
}

TEST_CASE("freeze_range: lo <= hi and width is twice the std on random streams") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    RunningMoments m;
    std::vector<double> xs;
    const std::size_t n = 1 + rng.below(50);
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(rng.uniform());
      m.add(xs.back());
    }
    const auto r = freeze_range(m, 1);
    REQUIRE(r.has_value());
    CHECK(r->lo <= r->hi);
    CHECK(std::abs((r->hi - r->lo) - 2.0 * two_pass(xs).second) < 1e-9);
  }
}

TEST_CASE("streaming moments against two-pass, order independence and merge") {
  Rng rng(10);
  std::vector<double> xs(100000);
  for (double& x : xs) x = rng.uniform();
  RunningMoments fwd, rev, left, right;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fwd.add(xs[i]);
    rev.add(xs[xs.size() - 1 - i]);
    (i % 2 ? left : right).add(xs[i]);
  }
  left.merge(right);
  const auto [mu, sd] = two_pass(xs);
  for (const RunningMoments* m : {&fwd, &rev, &left}) {
    CHECK(std::abs(m->mean() - mu) < 1e-9);
    CHECK(std::abs(m->stddev() - sd) < 1e-9);
  }
}

TEST_CASE("image_range: averaging, identity and fallback") {
  const FrozenPriors f = priors_with({{{0, "perched"}, {0.1, 0.3}}, {{0, "feeding"}, {0.3, 0.5}}},
                                     {{0, {0.2, 0.6}}});
  const auto both = image_range(f, 0, std::string("a bird perched feeding"));
  REQUIRE(both.has_value());
  CHECK(std::abs(both->lo - 0.2) < 1e-12);
  CHECK(std::abs(both->hi - 0.4) < 1e-12);

  const auto single = image_range(f, 0, std::string("perched"));
  REQUIRE(single.has_value());
  CHECK(*single == *f.word_range(0, "perched"));

  CHECK(image_range(f, 0, std::string("a calm ocean")) == f.class_range(0));
  CHECK(image_range(f, 0, std::nullopt) == f.class_range(0));
  CHECK(std::abs(f.class_range(0)->lo - 0.2) < 1e-12);
  CHECK_FALSE(image_range(f, 1, std::string("perched")).has_value());
}

TEST_CASE("image_range: word ranges below min_count are ignored") {
  FrozenPriors f;
  f.by_class_word[{0, "rare"}] = {1, 0.9, 0.0};
  f.by_class[0] = {5, 0.5, 0.1};
  const auto r = image_range(f, 0, std::string("rare"));
  REQUIRE(r.has_value());
  CHECK(std::abs(r->lo - 0.4) < 1e-12);
}

TEST_CASE("depth_mask: membership, closed boundary and undefined classes") {
  // Dyadic bounds so mean +- std reproduces them exactly.
  const FrozenPriors f = priors_with({}, {{0, {0.25, 0.5}}});
  const ImageRecord rec = record_with_depths({0.3, 0.6, 0.25, 0.5});
  const DepthMask m = depth_mask(rec, f, 2);
  CHECK(m.m(0, 0) == 1.0);
  CHECK(m.m(1, 0) == 0.0);
  CHECK(m.m(2, 0) == 1.0);
  CHECK(m.m(3, 0) == 1.0);
  CHECK(m.defined == std::vector<bool>{true, false});
  for (std::size_t i = 0; i < 4; ++i) CHECK(m.m(i, 1) == 1.0);
}

TEST_CASE("depth_mask: a superset range never removes a proposal") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> d(10);
    for (double& x : d) x = rng.uniform();
    const ImageRecord rec = record_with_depths(d);
    const double lo = rng.uniform(0.0, 0.5), hi = lo + rng.uniform(0.0, 0.5);
    const double widen = rng.uniform(0.0, 0.2);
    const DepthMask a = depth_mask(rec, priors_with({}, {{0, {lo, hi}}}), 1);
    const DepthMask b = depth_mask(rec, priors_with({}, {{0, {lo - widen, hi + widen}}}), 1);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(b.m(i, 0) >= a.m(i, 0));
  }
}

TEST_CASE("depth_mask: caption-free variant uses the class range only") {
  const FrozenPriors f = priors_with({{{0, "near"}, {0.0, 0.1}}}, {{0, {0.4, 0.6}}});
  const ImageRecord rec = record_with_depths({0.05, 0.5}, "near");
  const DepthMask with = depth_mask(rec, f, 1, true);
  const DepthMask without = depth_mask(rec, f, 1, false);
  CHECK(with.m(0, 0) == 1.0);
  CHECK(with.m(1, 0) == 0.0);
  CHECK(without.m(0, 0) == 0.0);
  CHECK(without.m(1, 0) == 1.0);
}

TEST_CASE("estimate_priors: empty stream, constant depths and unknown image") {
  Dataset data{record_with_depths({0.3, 0.3, 0.3}, "a bird", "a")};
  const PriorEstimate empty = estimate_priors(data, {});
  CHECK(empty.priors.by_class.empty());
  CHECK_FALSE(image_range(empty.priors, 0, data[0].caption).has_value());

  std::vector<Detection> preds;
  for (const Box& b : data[0].proposals) preds.push_back({"a", 0, b, 0.9});
  const PriorEstimate est = estimate_priors(data, preds);
  REQUIRE(est.coverage.size() == 1);
  const auto r = est.priors.class_range(0);
  REQUIRE(r.has_value());
  CHECK(std::abs(r->lo - 0.3) < 1e-12);
  CHECK(std::abs(r->hi - 0.3) < 1e-12);
  CHECK(r->hi - r->lo < 1e-12);
  CHECK(est.coverage[0].coverage == 1.0);
  CHECK(est.accepted == 3);

  preds.push_back({"nope", 0, data[0].proposals[0], 0.9});
  try {
    estimate_priors(data, preds);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("estimate_priors: permuted prediction streams freeze identically") {
  Rng rng(13);
  Dataset data;
  std::vector<Detection> preds;
  for (int n = 0; n < 30; ++n) {
    std::vector<double> d{rng.uniform(), rng.uniform()};
    data.push_back(record_with_depths(d, n % 2 ? "a bird perched" : "birds flying", "i" + std::to_string(n)));
    for (int k = 0; k < 2; ++k) preds.push_back({data.back().image_id, k, data.back().proposals[k], rng.uniform()});
  }
  const PriorEstimate a = estimate_priors(data, preds);
  rng.shuffle(preds);
  const PriorEstimate b = estimate_priors(data, preds);
  for (const auto& [c, s] : a.priors.by_class) {
    CHECK(std::abs(s.mean - b.priors.by_class.at(c).mean) < 1e-9);
    CHECK(std::abs(s.std - b.priors.by_class.at(c).std) < 1e-9);
  }
  CHECK(a.priors.by_class_word.size() == b.priors.by_class_word.size());
}

TEST_CASE("estimate_priors: uniform depths cover about 1/sqrt(3)") {
  Rng rng(14);
  const std::size_t n = 10000;
  Dataset data;
  std::vector<Detection> preds;
  std::vector<double> depths;
  for (std::size_t i = 0; i < n; ++i) {
    depths.push_back(rng.uniform(0.2, 0.4));
    data.push_back(record_with_depths({depths.back()}, std::nullopt, "u" + std::to_string(i)));
    preds.push_back({data.back().image_id, 0, data.back().proposals[0], 0.9});
  }
  const PriorEstimate est = estimate_priors(data, preds);
  const auto [mu, sd] = two_pass(depths);
  std::size_t inside = 0;
  for (double d : depths) inside += d >= mu - sd && d <= mu + sd;
  const double oracle_cov = static_cast<double>(inside) / static_cast<double>(n);
  CHECK(std::abs(est.coverage[0].coverage - oracle_cov) < 1e-6);
  CHECK(std::abs(est.coverage[0].coverage - 1.0 / std::sqrt(3.0)) < 0.05);
}

TEST_CASE("priors file round trip") {
  const FrozenPriors f = priors_with({{{1, "x"}, {0.1, 0.3}}}, {{1, {0.2, 0.6}}});
  const auto path = (std::filesystem::temp_directory_path() / "wsod_priors.json").string();
  save_priors(path, f);
  const FrozenPriors g = load_priors(path);
  std::filesystem::remove(path);
  CHECK(g.by_class.at(1).mean == f.by_class.at(1).mean);
  CHECK(g.by_class.at(1).std == f.by_class.at(1).std);
  CHECK(g.by_class_word.at({1, "x"}).count == 2);
  CHECK(g.min_count_word == f.min_count_word);
}
