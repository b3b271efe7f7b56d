#include "wsod/classifier.hpp"

#include <cmath>

#include <stdexcept>

#include "doctest.h"
#include "wsod/nn.hpp"
#include "wsod/rng.hpp"

using namespace wsod;

TEST_CASE("midn_combine degenerate and uniform cases") {
  Tensor one({1, 1}, {0.3});
  auto s = midn_combine(one, one);
  CHECK(s.p.at(0, 0) == doctest::Approx(1.0));

  Tensor det({2, 1});
  Tensor cls({2, 1});
  auto s2 = midn_combine(det, cls);
  CHECK(s2.p.at(0, 0) == doctest::Approx(0.5));
  CHECK(s2.p.at(1, 0) == doctest::Approx(0.5));

  Tensor a({2, 2});
  Tensor b({2, 3});
  CHECK_THROWS_AS(midn_combine(a, b), std::invalid_argument);
}

TEST_CASE("midn_combine stream normalizations") {
  Rng rng(127);
  Tensor det({3, 5});
  Tensor cls({3, 5});
  rng.fill_uniform(det, -2.0, 2.0);
  rng.fill_uniform(cls, -2.0, 2.0);
  auto s = midn_combine(det, cls);
  for (std::size_t c = 0; c < 3; ++c) {
    double row = 0.0;
    for (std::size_t r = 0; r < 5; ++r) row += s.det_probs.at(c, r);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (std::size_t r = 0; r < 5; ++r) {
    double col = 0.0;
    for (std::size_t c = 0; c < 3; ++c) col += s.cls_probs.at(c, r);
    CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("image_scores sums proposals and stays in (0,1]") {
  Tensor det({2, 1});
  Tensor cls({2, 1});
  auto phi = image_scores(midn_combine(det, cls));
  CHECK(phi[0] == doctest::Approx(0.5));
  CHECK(phi[1] == doctest::Approx(0.5));

  Rng rng(131);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = (std::size_t)rng.uniform_int(2, 4), r = (std::size_t)rng.uniform_int(1, 6);
    Tensor d({c, r}), k({c, r});
    rng.fill_uniform(d, -3.0, 3.0);
    rng.fill_uniform(k, -3.0, 3.0);
    auto scores = midn_combine(d, k);
    auto phis = image_scores(scores);
    for (double v : phis) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);  // strict: softmax product < detection row sum = 1
    }
  }
}

TEST_CASE("classification_loss values and validation") {
  // y=(1,0), phi=(0.5,0.5): -ln(0.5) - ln(0.5)
  CHECK(classification_loss({0.5, 0.5}, {1, 0}) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  const double eps = 1e-6;
  CHECK(classification_loss({1.0 - eps}, {1}) == doctest::Approx(eps).epsilon(1e-3));

  CHECK_THROWS_AS(classification_loss({1.0}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(classification_loss({0.0}, {0}), std::invalid_argument);
}

TEST_CASE("classification gradient through midn passes finite differences") {
  Rng rng(137);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 3, R = 4;
    Tensor det({C, R}), cls({C, R});
    rng.fill_uniform(det, -1.5, 1.5);
    rng.fill_uniform(cls, -1.5, 1.5);
    std::vector<int> labels = {1, 0, 1};

    auto loss_from = [&](const Tensor& d, const Tensor& k) {
      auto s = midn_combine(d, k);
      return classification_loss(image_scores(s), labels);
    };

    auto s = midn_combine(det, cls);
    auto phi = image_scores(s);
    auto gphi = classification_loss_grad(phi, labels);
    Tensor gp({C, R});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < R; ++r) gp.at(c, r) = gphi[c];
    auto gm = midn_backward(s, gp);

    auto loss_of_det = [&](const Tensor& d) { return loss_from(d, cls); };
    CHECK(finite_difference_check(loss_of_det, det, gm.det_logits, 1e-5) < 1e-4);
    auto loss_of_cls = [&](const Tensor& k) { return loss_from(det, k); };
    CHECK(finite_difference_check(loss_of_cls, cls, gm.cls_logits, 1e-5) < 1e-4);
  }
}

TEST_CASE("seg_overlap counts covered mask pixels") {
  SegmentationMask mask;
  mask.pixels = Tensor::zeros({8, 8});
  // 2x2 block at rows 2..3, cols 2..3
  for (std::size_t r = 2; r <= 3; ++r)
    for (std::size_t c = 2; c <= 3; ++c) mask.pixels.at(r, c) = 1.0;

  BBox cover = BBox::from_corners(0, 0, 8, 8);
  CHECK(seg_overlap(mask, cover) == doctest::Approx(1.0));

  BBox disjoint = BBox::from_corners(5, 5, 8, 8);
  CHECK(seg_overlap(mask, disjoint) == 0.0);

  // Half the block: rows 2..3, col 2 only.
  BBox half = BBox::from_corners(2, 2, 3, 4);
  CHECK(seg_overlap(mask, half) == doctest::Approx(0.5));

  SegmentationMask empty;
  empty.pixels = Tensor::zeros({4, 4});
  CHECK(seg_overlap(empty, cover) == 0.0);
}

TEST_CASE("couple_filter removal and retention branches") {
  // Three proposals: 0 and 1 overlap heavily, 2 is elsewhere.
  std::vector<BBox> props = {BBox::from_corners(0, 0, 4, 4), BBox::from_corners(0.2, 0.2, 4.2, 4.2),
                             BBox::from_corners(10, 10, 14, 14)};
  SegmentationMask on_target;
  on_target.pixels = Tensor::zeros({16, 16});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) on_target.pixels.at(r, c) = 1.0;

  // High overlap: nothing removed.
  auto kept = couple_filter({std::optional<std::size_t>{0}}, {on_target}, props, 0.5, 0.5);
  CHECK(kept == std::vector<std::size_t>{0, 1, 2});

  // Low overlap: top box and its IoU > 0.5 neighbor go.
  SegmentationMask off_target;
  off_target.pixels = Tensor::zeros({16, 16});
  for (std::size_t r = 10; r < 14; ++r)
    for (std::size_t c = 10; c < 14; ++c) off_target.pixels.at(r, c) = 1.0;
  auto kept2 = couple_filter({std::optional<std::size_t>{0}}, {off_target}, props, 0.5, 0.5);
  CHECK(kept2 == std::vector<std::size_t>{2});

  // Empty mask -> overlap 0 -> removal branch.
  SegmentationMask empty;
  empty.pixels = Tensor::zeros({16, 16});
  auto kept3 = couple_filter({std::optional<std::size_t>{2}}, {empty}, props, 0.5, 0.5);
  CHECK(kept3 == std::vector<std::size_t>{0, 1});
}

TEST_CASE("select_final prefers the second classifier on high overlap") {
  ScoredBox a{BBox::from_xywh(0, 0, 4, 4), 0.9};
  ScoredBox b{BBox::from_xywh(0.1, 0.1, 4, 4), 0.8};
  auto both_close = select_final(a, b);
  REQUIRE(both_close.size() == 1);
  CHECK(both_close[0].score == 0.8);

  ScoredBox far{BBox::from_xywh(20, 20, 4, 4), 0.7};
  auto both_far = select_final(a, far);
  CHECK(both_far.size() == 2);

  // IoU exactly 0.5 keeps both (strictly-over rule). Construct it:
  // A = [0,2]x[0,1], B = [0,1]x[0,2] gives inter 1, union 3 -> 1/3; instead
  // use A=[0,2]x[0,1], B=[0,2]x[0,2]: inter 2, union 4 -> exactly 0.5.
  ScoredBox h1{BBox::from_corners(0, 0, 2, 1), 0.9};
  ScoredBox h2{BBox::from_corners(0, 0, 2, 2), 0.8};
  CHECK(iou(h1.box, h2.box) == doctest::Approx(0.5));
  CHECK(select_final(h1, h2).size() == 2);
}

TEST_CASE("assign_refinement_labels pseudo ground truth geometry") {
  // Single proposal, one image class.
  Tensor scores({2, 1}, {0.9, 0.1});
  std::vector<BBox> one = {BBox::from_xywh(0, 0, 4, 4)};
  auto labels = assign_refinement_labels(scores, {0}, one, 0.5);
  CHECK(labels.label == std::vector<std::size_t>{0});

  // Three proposals: argmax j, neighbor at IoU >= 0.5, and one far away.
  std::vector<BBox> three = {BBox::from_xywh(0, 0, 4, 4), BBox::from_xywh(0.5, 0, 4, 4),
                             BBox::from_xywh(20, 20, 4, 4)};
  Tensor s3({2, 3}, {0.9, 0.2, 0.3, 0.0, 0.0, 0.0});
  auto l3 = assign_refinement_labels(s3, {0}, three, 0.5);
  CHECK(l3.label == std::vector<std::size_t>{0, 0, 1});
  CHECK(l3.background == 1);

  // Two image classes sharing the argmax proposal: later class wins.
  Tensor s4({3, 2}, {0.9, 0.1, 0.8, 0.2, 0.0, 0.0});
  std::vector<BBox> two = {BBox::from_xywh(0, 0, 4, 4), BBox::from_xywh(20, 0, 4, 4)};
  auto l4 = assign_refinement_labels(s4, {0, 1}, two, 0.5);
  CHECK(l4.label[0] == 1);

  CHECK_THROWS_AS(assign_refinement_labels(s4, {0}, {}, 0.5), std::invalid_argument);
}

TEST_CASE("assign_refinement_labels gives exactly one label per proposal") {
  Rng rng(139);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t R = 1 + (std::size_t)rng.uniform_int(0, 9);
    const std::size_t C = 2;
    Tensor scores({C + 1, R});
    rng.fill_uniform(scores, 0.0, 1.0);
    std::vector<BBox> props;
    for (std::size_t r = 0; r < R; ++r) {
      props.push_back(BBox{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), rng.uniform(1.0, 4.0),
                           rng.uniform(1.0, 4.0), BoxSpace::Feature});
    }
    auto labels = assign_refinement_labels(scores, {0, 1}, props, 0.5);
    REQUIRE(labels.label.size() == R);
    for (std::size_t v : labels.label) CHECK(v <= C);
  }
}

TEST_CASE("refinement_loss values and gradient") {
  // Perfect prediction -> 0.
  Tensor perfect({2, 2}, {1.0, 0.0, 0.0, 1.0});
  RefinementLabels labels;
  labels.background = 1;
  labels.label = {0, 1};
  CHECK(refinement_loss(perfect, labels) == doctest::Approx(0.0));

  // |R|=2, labeled probs (0.5, 0.25) -> (ln2 + ln4)/2
  Tensor half({2, 2}, {0.5, 0.75, 0.5, 0.25});
  CHECK(refinement_loss(half, labels) ==
        doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));

  // Gradient through a column softmax passes finite differences.
  Rng rng(149);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C1 = 3, R = 4;
    Tensor logits({C1, R});
    rng.fill_uniform(logits, -1.0, 1.0);
    RefinementLabels rl;
    rl.background = C1 - 1;
    rl.label.resize(R);
    for (auto& l : rl.label) l = (std::size_t)rng.uniform_int(0, (int)C1 - 1);

    auto probs_of = [&](const Tensor& z) {
      Tensor p({C1, R});
      std::vector<double> col(C1);
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C1; ++c) col[c] = z.at(c, r);
        auto sm = softmax(col);
        for (std::size_t c = 0; c < C1; ++c) p.at(c, r) = sm[c];
      }
      return p;
    };
    auto loss_fn = [&](const Tensor& z) { return refinement_loss(probs_of(z), rl); };

    Tensor probs = probs_of(logits);
    Tensor gp = refinement_loss_grad(probs, rl);
    Tensor gz({C1, R});
    std::vector<double> col_y(C1), col_g(C1), col_out(C1);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C1; ++c) {
        col_y[c] = probs.at(c, r);
        col_g[c] = gp.at(c, r);
      }
      softmax_backward_row(col_y, col_g, col_out);
      for (std::size_t c = 0; c < C1; ++c) gz.at(c, r) = col_out[c];
    }
    CHECK(finite_difference_check(loss_fn, logits, gz, 1e-5) < 1e-4);
  }
}

TEST_CASE("total_loss is a plain sum, stage order irrelevant") {
  CHECK(total_loss(1.0, 2.0, {3.0}) == doctest::Approx(6.0));
  CHECK(total_loss(0.0, 0.0, {}) == 0.0);

  Rng rng(151);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = rng.uniform(0.0, 5.0), b = rng.uniform(0.0, 5.0);
    std::vector<double> stages = {rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0),
                                  rng.uniform(0.0, 5.0)};
    const double t1 = total_loss(a, b, stages);
    std::swap(stages[0], stages[2]);
    CHECK(total_loss(a, b, stages) == doctest::Approx(t1));
    CHECK(t1 == doctest::Approx(a + b + stages[0] + stages[1] + stages[2]));
  }
}
