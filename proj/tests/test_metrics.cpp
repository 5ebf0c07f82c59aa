#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "pwseg/metrics.hpp"
#include "pwseg/rng.hpp"

using namespace pwseg;

namespace {

SegmentationMask random_labels(Rng& rng, int rows, int cols, int num_classes) {
  SegmentationMask mask(rows, cols, 0);
  for (int& label : mask.labels) label = rng.uniform_int(num_classes);
  return mask;
}

}  // namespace

TEST_CASE("miou on exact and complementary predictions") {
  Rng rng(1);
  const auto gt = random_labels(rng, 16, 16, 3);
  const auto perfect = miou(gt, gt, 3);
  for (int c = 0; c < 3; ++c) {
    if (!std::isnan(perfect.per_class[c])) CHECK(perfect.per_class[c] == 1.0);
  }
  CHECK(perfect.mean == 1.0);

  // two classes, complemented prediction
  auto gt2 = random_labels(rng, 8, 8, 2);
  auto flipped = gt2;
  for (int& label : flipped.labels) label = 1 - label;
  CHECK(miou(flipped, gt2, 2).mean == 0.0);
}

TEST_CASE("miou matches a brute-force pixel count oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int num_classes = rng.uniform_int(2, 5);
    const auto gt = random_labels(rng, 12, 12, num_classes);
    const auto pred = random_labels(rng, 12, 12, num_classes);
    const auto report = miou(pred, gt, num_classes);
    for (int c = 0; c < num_classes; ++c) {
      long long tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool in_gt = gt.labels[i] == c, in_pred = pred.labels[i] == c;
        tp += in_gt && in_pred;
        fp += !in_gt && in_pred;
        fn += in_gt && !in_pred;
      }
      if (tp + fp + fn == 0) {
        CHECK(std::isnan(report.per_class[c]));
      } else {
        CHECK(report.per_class[c] ==
              Catch::Approx(static_cast<double>(tp) / (tp + fp + fn)));
      }
    }
  }
}

TEST_CASE("miou excludes classes with empty union and ignores ignore pixels") {
  SegmentationMask gt(4, 4, 0);
  SegmentationMask pred(4, 4, 0);
  gt.at(0, 0) = 1;
  pred.at(0, 0) = 1;
  // class 2 appears nowhere: excluded from the mean
  const auto report = miou(pred, gt, 3);
  CHECK(report.classes_counted == 2);
  CHECK(std::isnan(report.per_class[2]));
  CHECK(report.mean == 1.0);

  gt.at(1, 1) = gt.ignore_value;
  pred.at(1, 1) = 2;  // would be a false positive, but the pixel is ignored
  CHECK(miou(pred, gt, 3).mean == 1.0);
}

TEST_CASE("miou is invariant under simultaneous class permutation") {
  Rng rng(3);
  const auto gt = random_labels(rng, 10, 10, 3);
  const auto pred = random_labels(rng, 10, 10, 3);
  const int perm[3] = {2, 0, 1};
  auto apply = [&](const SegmentationMask& m) {
    SegmentationMask out = m;
    for (int& label : out.labels) label = perm[label];
    return out;
  };
  CHECK(miou(pred, gt, 3).mean == Catch::Approx(miou(apply(pred), apply(gt), 3).mean));
}

TEST_CASE("pseudo_label_accuracy counting") {
  Rng rng(4);
  const auto gt = random_labels(rng, 8, 8, 3);

  const std::vector<std::uint8_t> empty(gt.size(), 0);
  const auto none = pseudo_label_accuracy(gt, gt, empty);
  CHECK_FALSE(none.defined);
  CHECK(none.count == 0);

  const std::vector<std::uint8_t> full(gt.size(), 1);
  const auto perfect = pseudo_label_accuracy(gt, gt, full);
  CHECK(perfect.defined);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.count == 64);

  for (int trial = 0; trial < 30; ++trial) {
    const auto pseudo = random_labels(rng, 8, 8, 3);
    std::vector<std::uint8_t> selection(gt.size());
    for (auto& s : selection) s = rng.uniform() < 0.5;
    const auto got = pseudo_label_accuracy(pseudo, gt, selection);
    long long correct = 0, count = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!selection[i]) continue;
      count += 1;
      correct += pseudo.labels[i] == gt.labels[i];
    }
    CHECK(got.count == count);
    if (count > 0) {
      CHECK(got.accuracy == Catch::Approx(static_cast<double>(correct) / count));
    }
  }
}

TEST_CASE("confidence histogram tallies") {
  Rng rng(5);
  const int rows = 8, cols = 8;
  const auto gt = random_labels(rng, rows, cols, 3);
  Tensor2D conf(rows, cols);
  for (double& v : conf.data) v = rng.uniform();

  // all correct: incorrect column all zero
  const auto all_correct = confidence_correctness_histogram(conf, gt, gt, 10);
  long long total = 0;
  for (const auto& bin : all_correct) {
    CHECK(bin.incorrect == 0);
    total += bin.correct;
  }
  CHECK(total == rows * cols);

  // single bin equals global tallies
  const auto pseudo = random_labels(rng, rows, cols, 3);
  const auto single = confidence_correctness_histogram(conf, pseudo, gt, 1);
  REQUIRE(single.size() == 1);
  long long correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) correct += pseudo.labels[i] == gt.labels[i];
  CHECK(single[0].correct == correct);
  CHECK(single[0].incorrect == static_cast<long long>(gt.size()) - correct);

  // random tally against a brute-force loop, bins sum to evaluated pixels
  const int bins = 7;
  const auto hist = confidence_correctness_histogram(conf, pseudo, gt, bins);
  std::vector<HistBin> expected(bins);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int b = static_cast<int>(conf.at(r, c) * bins);
      if (b == bins) b = bins - 1;
      if (pseudo.at(r, c) == gt.at(r, c)) {
        expected[b].correct += 1;
      } else {
        expected[b].incorrect += 1;
      }
    }
  }
  long long sum = 0;
  for (int b = 0; b < bins; ++b) {
    CHECK(hist[b].correct == expected[b].correct);
    CHECK(hist[b].incorrect == expected[b].incorrect);
    sum += hist[b].correct + hist[b].incorrect;
  }
  CHECK(sum == rows * cols);
  CHECK_THROWS_AS(confidence_correctness_histogram(conf, gt, gt, 0),
                  std::invalid_argument);
}

TEST_CASE("prototype_stability on constant and scaled histories") {
  std::map<int, std::vector<FeatureVector>> constant;
  constant[0] = {{1.0, 2.0, 3.0, 4.0, 0.5, 0.1}, {1.0, 2.0, 3.0, 4.0, 0.5, 0.1}};
  const auto stats = prototype_stability(constant, 3);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].value_variance == 0.0);
  CHECK(stats[0].mean_hamming == 0.0);

  // positive epoch-varying scaling: values move, top-k indices do not
  std::map<int, std::vector<FeatureVector>> scaled;
  const FeatureVector base = {0.9, 0.1, 0.7, 0.3, 0.5, 0.2};
  for (double factor : {1.0, 1.5, 2.0, 3.0}) {
    FeatureVector snap(base);
    for (double& v : snap) v *= factor;
    scaled[1].push_back(snap);
  }
  const auto scaled_stats = prototype_stability(scaled, 3);
  REQUIRE(scaled_stats.size() == 1);
  CHECK(scaled_stats[0].value_variance > 0.0);
  CHECK(scaled_stats[0].mean_hamming == 0.0);
  CHECK(scaled_stats[0].norm_index_instability == 0.0);
  CHECK(scaled_stats[0].norm_value_variance > 0.0);

  std::map<int, std::vector<FeatureVector>> short_history;
  short_history[0] = {{1.0, 2.0}};
  CHECK_THROWS_AS(prototype_stability(short_history, 1), std::invalid_argument);
}

TEST_CASE("stability CSV schema") {
  std::map<int, std::vector<FeatureVector>> history;
  history[2] = {{1.0, 0.0, 2.0}, {1.0, 0.0, 2.0}};
  const auto csv = stability_csv(prototype_stability(history, 2));
  CHECK(csv.rfind("class_id,snapshots,value_variance,norm_value_variance,mean_hamming,"
                  "norm_index_instability\n",
                  0) == 0);
  CHECK(csv.find("\n2,2,0,0,0,0\n") != std::string::npos);
}
