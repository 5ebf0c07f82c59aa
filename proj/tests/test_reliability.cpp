#include <catch2/catch_amalgamated.hpp>

#include "pwseg/reliability.hpp"
#include "pwseg/rng.hpp"

using namespace pwseg;

namespace {

struct RandomInstance {
  SegmentationMask pseudo;
  Tensor2D conf;
  std::vector<LabeledBox> boxes;
};

RandomInstance random_instance(Rng& rng, int rows, int cols, int num_classes,
                               int max_boxes) {
  RandomInstance inst;
  inst.pseudo = SegmentationMask(rows, cols, 0);
  for (int& label : inst.pseudo.labels) label = rng.uniform_int(num_classes);
  inst.conf = Tensor2D(rows, cols);
  for (double& v : inst.conf.data) v = rng.uniform();
  const int n = rng.uniform_int(0, max_boxes);
  for (int i = 0; i < n; ++i) {
    const int r0 = rng.uniform_int(rows), c0 = rng.uniform_int(cols);
    const int r1 = std::min(rows - 1, r0 + rng.uniform_int(1, 8));
    const int c1 = std::min(cols - 1, c0 + rng.uniform_int(1, 8));
    inst.boxes.push_back(
        LabeledBox{rng.uniform_int(num_classes), {r0, c0, r1, c1}, rng.uniform()});
  }
  return inst;
}

// quadratic oracle: for every pixel scan every box
std::vector<std::uint8_t> reliable_oracle(const RandomInstance& inst, double tau) {
  std::vector<std::uint8_t> out(inst.pseudo.size(), 0);
  for (int r = 0; r < inst.pseudo.rows; ++r) {
    for (int c = 0; c < inst.pseudo.cols; ++c) {
      if (inst.conf.at(r, c) < tau) continue;
      for (const auto& box : inst.boxes) {
        if (box.class_id == inst.pseudo.at(r, c) && box.rect.contains(r, c)) {
          out[static_cast<std::size_t>(r) * inst.pseudo.cols + c] = 1;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("no boxes means nothing is reliable") {
  SegmentationMask pseudo(6, 6, 1);
  Tensor2D conf(6, 6, 1.0);
  const auto mask = reliable_pixels(pseudo, conf, {}, 0.95);
  CHECK(mask.count() == 0);
}

TEST_CASE("full-image box marks exactly the same-class pixels") {
  SegmentationMask pseudo(6, 6, 0);
  pseudo.at(2, 2) = 3;
  pseudo.at(4, 1) = 3;
  pseudo.at(0, 5) = 2;
  Tensor2D conf(6, 6, 1.0);
  const std::vector<LabeledBox> boxes = {{3, {0, 0, 5, 5}, 0.9}};
  const auto mask = reliable_pixels(pseudo, conf, boxes, 0.95);
  CHECK(mask.count() == 2);
  CHECK(mask.at(2, 2));
  CHECK(mask.at(4, 1));
  CHECK_FALSE(mask.at(0, 5));
  CHECK(mask.source[2 * 6 + 2] == static_cast<std::uint8_t>(ReliableSource::agreement));
}

TEST_CASE("reliable_pixels equals the quadratic oracle on random instances") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, rng.uniform_int(1, 24), rng.uniform_int(1, 24),
                                      4, 6);
    const double tau = 0.2 + 0.8 * rng.uniform();
    const auto mask = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, tau);
    const auto expected = reliable_oracle(inst, tau);
    CHECK(mask.reliable == expected);
  }
}

TEST_CASE("raising tau never adds reliable pixels") {
  Rng rng(56);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instance(rng, 16, 16, 4, 5);
    const double lo = 0.2 + 0.4 * rng.uniform();
    const double hi = lo + (1.0 - lo) * rng.uniform();
    const auto loose = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, lo);
    const auto strict = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, hi);
    for (std::size_t i = 0; i < loose.reliable.size(); ++i) {
      if (strict.reliable[i]) CHECK(loose.reliable[i]);
    }
  }
}

TEST_CASE("adding a box never removes reliable pixels") {
  Rng rng(57);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 16, 16, 4, 5);
    const auto before = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, 0.5);
    inst.boxes.push_back(LabeledBox{rng.uniform_int(4), {2, 2, 10, 10}, 0.9});
    const auto after = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, 0.5);
    for (std::size_t i = 0; i < before.reliable.size(); ++i) {
      if (before.reliable[i]) CHECK(after.reliable[i]);
    }
  }
}

TEST_CASE("reliable set is a subset of the confident set") {
  Rng rng(58);
  const auto inst = random_instance(rng, 20, 20, 4, 8);
  const double tau = 0.6;
  const auto mask = reliable_pixels(inst.pseudo, inst.conf, inst.boxes, tau);
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 20; ++c) {
      if (mask.at(r, c)) CHECK(inst.conf.at(r, c) >= tau);
    }
  }
}

TEST_CASE("overlapping boxes of different classes act existentially") {
  SegmentationMask pseudo(4, 4, 1);
  pseudo.at(1, 1) = 2;
  Tensor2D conf(4, 4, 1.0);
  const std::vector<LabeledBox> boxes = {{1, {0, 0, 3, 3}, 0.9}, {2, {0, 0, 3, 3}, 0.9}};
  const auto mask = reliable_pixels(pseudo, conf, boxes, 0.9);
  CHECK(mask.count() == 16);  // every pixel matches one of the two boxes
}

TEST_CASE("tau validation") {
  SegmentationMask pseudo(2, 2, 0);
  Tensor2D conf(2, 2, 1.0);
  CHECK_THROWS_AS(reliable_pixels(pseudo, conf, {}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(reliable_pixels(pseudo, conf, {}, 1.5), std::invalid_argument);
  Tensor2D bad(3, 2, 1.0);
  CHECK_THROWS_AS(reliable_pixels(pseudo, bad, {}, 0.5), std::invalid_argument);
}
