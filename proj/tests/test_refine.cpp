#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsod/error.hpp"
#include "wsod/refine.hpp"

using namespace wsod;

namespace {

std::vector<Box> row_of_boxes(std::size_t n) {
  std::vector<Box> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back({20.0 * static_cast<double>(i), 0.0, 20.0 * static_cast<double>(i) + 10.0, 10.0});
  return b;
}

DepthMask mask_from(const Matrix& m, std::vector<bool> defined) { return DepthMask{m, std::move(defined)}; }

}  // namespace

TEST_CASE("mine: all-ones mask equals unfiltered mining") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageRecord rec = oracle::random_record(rng, 2 + rng.below(7), 2);
    const std::size_t R = rec.num_proposals(), C = 3;
    Matrix scores(R, C);
    for (double& v : scores.data()) v = rng.uniform();
    const DepthMask ones = DepthMask::all_ones(R, C);
    const std::vector<int> labels{0, 2};
    const PseudoBoxSet a = mine(rec.proposals, scores, &ones, labels);
    const PseudoBoxSet b = mine(rec.proposals, scores, nullptr, labels);
    REQUIRE(a.groups.size() == b.groups.size());
    for (std::size_t g = 0; g < a.groups.size(); ++g) {
      CHECK(a.groups[g].seed == b.groups[g].seed);
      CHECK(a.groups[g].members == b.groups[g].members);
      // The seed carries the highest score among the candidates.
      for (std::size_t i = 0; i < R; ++i) CHECK(scores(i, labels[g]) <= a.groups[g].seed_score);
    }
  }
}

TEST_CASE("mine: the depth filter dominates the score") {
  ImageRecord rec;
  rec.proposals = row_of_boxes(3);
  rec.proposal_depths = {0.1, 0.3, 0.9};
  FrozenPriors f;
  f.by_class[0] = {2, 0.3, 0.1};  // [0.2, 0.4]
  const DepthMask m = depth_mask(rec, f, 1);
  CHECK(m.m == Matrix{{0.0}, {1.0}, {0.0}});
  const Matrix scores{{0.9}, {0.5}, {0.99}};
  const PseudoBoxSet p = mine(rec.proposals, scores, &m, {0});
  REQUIRE(p.groups.size() == 1);
  CHECK(p.groups[0].seed == 1);
  CHECK(p.groups[0].members == std::vector<int>{1});
  CHECK_FALSE(p.groups[0].used_fallback);
}

TEST_CASE("mine: empty candidate set falls back to all proposals") {
  const auto boxes = row_of_boxes(3);
  const Matrix scores{{0.9}, {0.5}, {0.99}};
  const DepthMask m = mask_from(Matrix(3, 1, 0.0), {true});
  const PseudoBoxSet p = mine(boxes, scores, &m, {0});
  CHECK(p.groups[0].seed == 2);
  CHECK(p.groups[0].used_fallback);
}

TEST_CASE("mine: ties go to the lowest index and clusters respect both cutoffs") {
  const std::vector<Box> boxes{{0, 0, 10, 10}, {0, 0, 10, 10}, {1, 0, 11, 10}, {0, 0, 10, 10}, {50, 50, 60, 60}};
  const Matrix scores{{0.8}, {0.8}, {0.5}, {0.3}, {0.7}};
  const PseudoBoxSet p = mine(boxes, scores, nullptr, {0});
  CHECK(p.groups[0].seed == 0);
  // 1: same box, score 0.8; 2: IoU 9/11, score 0.5 >= 0.4; 3: score 0.3 < 0.4; 4: disjoint.
  CHECK(p.groups[0].members == std::vector<int>{0, 1, 2});
}

TEST_CASE("refinement_loss: perfect branch, uniform closed form") {
  RefineTargets t{{1, 0}, {1.0, 1.0}};
  const Matrix perfect{{-1000.0, 1000.0, -1000.0}, {1000.0, -1000.0, -1000.0}};
  CHECK(refinement_loss(perfect, t) == 0.0);

  RefineTargets one{{1}, {1.0}};
  CHECK(std::abs(refinement_loss(Matrix{{0.0, 0.0, 0.0}}, one) - std::log(3.0)) < 1e-15);
  CHECK(std::abs(refinement_loss(Matrix{{0.0, 0.0, 0.0}}, one) - 1.0986122886681098) < 1e-12);
}

TEST_CASE("refinement_loss: random R=4, C=2 against a weighted cross-entropy oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t R = 4, C = 2;
    const ImageRecord rec = oracle::random_record(rng, R, 3);
    Matrix sup(R, C);
    for (double& v : sup.data()) v = rng.uniform();
    const PseudoBoxSet pseudo = mine(rec.proposals, sup, nullptr, {0, 1});
    const RefineTargets t = refinement_targets(rec.proposals, pseudo, C);

    // Oracle targets: nearest seed by IoU, lower class on ties, background
    // below 0.5; weight is that seed's score.
    for (std::size_t i = 0; i < R; ++i) {
      double best = -1.0;
      int cls = 0;
      double w = 0.0;
      for (int c = 0; c < 2; ++c) {
        const int seed = pseudo.groups[c].seed;
        const double o = oracle::box_iou(rec.proposals[i], rec.proposals[seed]);
        if (o > best) {
          best = o;
          cls = c;
          w = sup(seed, c);
        }
      }
      CHECK(t.target[i] == (best >= 0.5 ? cls : 2));
      CHECK(t.weight[i] == w);
    }

    const Matrix s = oracle::random_matrix(rng, R, C + 1, 2.0);
    double want = 0.0;
    for (std::size_t i = 0; i < R; ++i) {
      double den = 0.0;
      for (std::size_t k = 0; k <= C; ++k) den += std::exp(s(i, k));
      want -= t.weight[i] * std::log(std::exp(s(i, t.target[i])) / den);
    }
    want /= static_cast<double>(R);
    CHECK(std::abs(refinement_loss(s, t) - want) < 1e-12);
  }
}

TEST_CASE("refinement_targets: no seeds gives background with weight one") {
  const auto boxes = row_of_boxes(3);
  const RefineTargets t = refinement_targets(boxes, PseudoBoxSet{}, 4);
  CHECK(t.target == std::vector<int>{4, 4, 4});
  CHECK(t.weight == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("refinement_loss: gradient check with fixed targets") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(30 + seed);
    const std::size_t R = 2 + rng.below(7), C = 1 + rng.below(4), D = 1 + rng.below(8);
    const ImageRecord rec = oracle::random_record(rng, R, D);
    Matrix sup(R, C);
    for (double& v : sup.data()) v = rng.uniform();
    std::vector<int> labels{static_cast<int>(rng.below(C))};
    const RefineTargets t = refinement_targets(rec.proposals, mine(rec.proposals, sup, nullptr, labels), C);
    RefineBranch b = RefineBranch::zeros(0, D, C);
    b.w.value = oracle::random_matrix(rng, D, C + 1, 0.5);
    b.b.value = oracle::random_matrix(rng, 1, C + 1, 0.5);
    refinement_loss(rec.rgb_features, b, t, nullptr);
    const auto f = [&] { return refinement_loss(affine(rec.rgb_features, b.w.value, b.b.value), t); };
    CHECK(grad_check(f, b.params()) < 1e-4);
  }
}

TEST_CASE("depth_attention: halving, identity, undefined classes, twice gives a quarter") {
  const Matrix p{{0.3, 0.2}, {0.1, 0.4}};
  const DepthMask m = mask_from(Matrix{{0.0, 0.0}, {1.0, 1.0}}, {true, false});
  const Matrix once = depth_attention(p, m);
  CHECK(once(0, 0) == 0.15);
  CHECK(once(1, 0) == 0.1);
  CHECK(once(0, 1) == 0.2);
  CHECK(once(1, 1) == 0.4);

  CHECK(depth_attention(p, DepthMask::all_ones(2, 2)) == p);

  const Matrix twice = depth_attention(once, m);
  CHECK(twice(0, 0) == 0.3 * 0.25);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(once.data()[k] <= p.data()[k]);

  CHECK_THROWS_AS(depth_attention(Matrix(3, 2), m), Error);
}

TEST_CASE("mining_tally: counts members overlapping a GT of the group class") {
  ImageRecord rec;
  rec.proposals = {{0, 0, 10, 10}, {0, 0, 9, 10}, {30, 30, 40, 40}};
  rec.gt_boxes = std::vector<GtBox>{{{0, 0, 10, 10}, 0}};
  PseudoBoxSet p;
  p.groups.push_back({0, 0, 0.9, {0, 1}, false});
  p.groups.push_back({1, 2, 0.5, {2}, false});
  const MiningTally t = mining_tally(p, rec);
  CHECK(t.pseudo_boxes == 3);
  CHECK(t.correct == 2);
  CHECK(t.precision() == doctest::Approx(2.0 / 3.0));
}
