#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "oracles.hpp"
#include "panconf/panoptic.hpp"

using namespace panconf;

namespace {

MaskPrediction constant_prediction(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double s) {
  MaskPrediction pred;
  pred.num_classes = c;
  pred.class_logits.assign(n * (c + 1), 0.0);
  pred.mask_logits = PlaneStack(n, h, w, s);
  return pred;
}

}  // namespace

TEST_CASE("pixel confidence fixtures") {
  auto pred = constant_prediction(1, 1, 3, 3, 0.0);
  for (double v : pixel_confidence(pred).values) CHECK(v == 0.25);

  pred.class_logits = {20.0, -20.0};
  pred.mask_logits = PlaneStack(1, 3, 3, 20.0);
  for (double v : pixel_confidence(pred).values) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pixel confidence matches the product oracle") {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto pred = gen::random_prediction(rng, {3, 4, 4, 12});
    const auto rho = pixel_confidence(pred);
    for (std::size_t i = 0; i < pred.num_masks(); ++i) {
      for (std::size_t r = 0; r < pred.height(); ++r) {
        for (std::size_t c = 0; c < pred.width(); ++c) {
          const double v = rho.at(i, r, c);
          REQUIRE(v == doctest::Approx(oracle::rho_at(pred, i, r, c)).epsilon(1e-12));
          REQUIRE(v > 0.0);
          REQUIRE(v < 1.0);
        }
      }
    }
  }
}

TEST_CASE("best_real_class ignores the no-object column") {
  const double row[] = {0.0, 1.0, 3.0};
  const auto s = best_real_class(row);
  CHECK(s.class_id == 2);
  CHECK(s.no_object_wins);
  const double tied[] = {1.0, 1.0, 0.0};
  CHECK(best_real_class(tied).class_id == 1);
}

TEST_CASE("fusion fixtures") {
  SUBCASE("single confident mask covers the image") {
    auto pred = constant_prediction(1, 2, 4, 5, 1.0);
    pred.class_logits = {0.0, std::log(0.95 * 2 / 0.05), 0.0};  // class 2 at 0.95
    const auto pan = fuse_panoptic(pred, {});
    REQUIRE(pan.table.size() == 1);
    CHECK(pan.table[0] == SegmentEntry{1, 2, 0, 20});
    for (auto id : pan.id_map) CHECK(id == 1);
  }
  SUBCASE("equal rho goes to the lower index") {
    auto pred = constant_prediction(3, 1, 4, 4, 2.0);
    pred.class_logits = {-9.0, -9.0, 5.0, -5.0, 5.0, -5.0};  // query 0 is no-object
    const auto pan = fuse_panoptic(pred, {});
    REQUIRE(pan.table.size() == 1);
    CHECK(pan.table[0].mask_index == 1);
    CHECK(pan.table[0].area == 16);
  }
  SUBCASE("a query that loses most of its mask is dropped to void") {
    auto pred = constant_prediction(2, 1, 1, 10, -3.0);
    pred.class_logits = {6.0, 0.0, 3.0, 0.0};
    for (std::size_t c = 0; c < 10; ++c) pred.mask_logits.at(1, 0, c) = 3.0;
    for (std::size_t c = 0; c < 3; ++c) pred.mask_logits.at(0, 0, c) = 3.0;
    // Query 0 keeps its 3 pixels; query 1 claims 7 of its 10 (< 0.8) and is dropped.
    const auto pan = fuse_panoptic(pred, {});
    REQUIRE(pan.table.size() == 1);
    CHECK(pan.table[0].mask_index == 0);
    CHECK(pan.id_map == std::vector<std::uint32_t>{1, 1, 1, 0, 0, 0, 0, 0, 0, 0});
  }
  SUBCASE("min_area") {
    auto pred = constant_prediction(1, 1, 2, 2, 1.0);
    pred.class_logits = {5.0, 0.0};
    CHECK(fuse_panoptic(pred, {0.8, 0.8, 4}).table.size() == 1);
    CHECK(fuse_panoptic(pred, {0.8, 0.8, 5}).table.empty());
  }
}

TEST_CASE("fusion equals the literal per-pixel reference") {
  Rng rng(5);
  for (int k = 0; k < 150; ++k) {
    const auto pred = gen::random_prediction(rng, {3, 3, 2, 20});
    FusionConfig cfg;
    if (k % 3 == 1) cfg.min_area = gen::between(rng, 1, 40);
    if (k % 5 == 2) cfg.overlap_threshold = rng.uniform();
    const auto pan = fuse_panoptic(pred, cfg);
    const auto ref = oracle::fuse(pred, cfg);
    REQUIRE(pan.id_map == ref.id_map);
    REQUIRE(pan.table == ref.table);
    pan.validate();
  }
}

TEST_CASE("fusion properties") {
  Rng rng(8);
  for (int k = 0; k < 100; ++k) {
    const auto pred = gen::random_prediction(rng);
    const FusionConfig cfg;
    const auto pan = fuse_panoptic(pred, cfg);

    // Adding a constant to a class row does not move its softmax.
    auto shifted = pred;
    for (std::size_t i = 0; i < shifted.num_masks(); ++i) {
      const double delta = rng.uniform(-3.0, 3.0);
      for (auto& z : shifted.class_row(i)) z += delta;
    }
    CHECK(fuse_panoptic(shifted, cfg).id_map == pan.id_map);
    CHECK(fuse_panoptic(pred, cfg) == pan);

    std::size_t last = pan.table.size();
    for (std::uint64_t area : {1, 5, 20, 80, 400}) {
      const auto count = fuse_panoptic(pred, {0.8, 0.8, area}).table.size();
      CHECK(count <= last);
      last = count;
    }
  }
}

TEST_CASE("fusion rejects malformed predictions") {
  auto pred = constant_prediction(2, 1, 2, 2, 0.0);
  pred.class_logits.pop_back();
  CHECK_THROWS_AS(fuse_panoptic(pred, {}), std::invalid_argument);
  pred = constant_prediction(2, 1, 2, 2, 0.0);
  pred.mask_logits.values[3] = std::nan("");
  CHECK_THROWS_AS(fuse_panoptic(pred, {}), std::invalid_argument);
  CHECK_THROWS_AS(fuse_panoptic(constant_prediction(1, 1, 2, 2, 0.0), {1.5, 0.8, 0}), std::invalid_argument);
}

TEST_CASE("pseudo-labels") {
  PanopticSegmentation empty{2, 3, std::vector<std::uint32_t>(6, 0), {}};
  CHECK(to_pseudolabel(empty).masks.empty());

  PanopticSegmentation two{2, 2, {3, 3, 9, 0}, {{3, 1, 0, 2}, {9, 2, 1, 1}}};
  const auto labels = to_pseudolabel(two);
  REQUIRE(labels.masks.size() == 2);
  CHECK(labels.masks[0].pixels == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(labels.masks[1].pixels == std::vector<std::uint8_t>{0, 0, 1, 0});
  CHECK(labels.masks[1].class_id == 2);

  Rng rng(9);
  for (int k = 0; k < 40; ++k) {
    const auto pred = gen::random_prediction(rng);
    const auto pan = fuse_panoptic(pred, {});
    const auto pl = to_pseudolabel(pan);
    REQUIRE(pl.masks.size() == pan.table.size());
    for (std::size_t p = 0; p < pan.id_map.size(); ++p) {
      int covered = 0;
      for (const auto& m : pl.masks) covered += m.pixels[p];
      CHECK(covered == (pan.id_map[p] != 0 ? 1 : 0));
    }
    for (std::size_t j = 0; j < pl.masks.size(); ++j) {
      std::uint64_t area = 0;
      for (auto v : pl.masks[j].pixels) area += v;
      CHECK(area == pan.table[j].area);
    }
  }
}

TEST_CASE("panoptic validation") {
  PanopticSegmentation pan{1, 3, {1, 1, 2}, {{1, 1, 0, 2}, {2, 1, 1, 1}}};
  CHECK_NOTHROW(pan.validate());
  auto bad = pan;
  bad.table[1].segment_id = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = pan;
  bad.table.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = pan;
  bad.table[0].class_id = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = pan;
  bad.id_map = {1, 1, 1};
  refresh_areas(bad);
  CHECK(bad.table.size() == 1);
  CHECK(bad.table[0].area == 3);
}
