#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "pwseg/dataset_io.hpp"
#include "pwseg/synthdata.hpp"

using namespace pwseg;
namespace fs = std::filesystem;

TEST_CASE("zero foreground shapes give all-background masks") {
  DatasetSpec spec;
  spec.num_images = 4;
  spec.shapes_min = 0;
  spec.shapes_max = 0;
  for (const auto& item : generate(spec)) {
    for (int label : item.mask.labels) CHECK(label == 0);
  }
}

TEST_CASE("generation is deterministic under the seed") {
  DatasetSpec spec;
  spec.num_images = 6;
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.data == b[i].image.data);
    CHECK(a[i].mask.labels == b[i].mask.labels);
  }
  DatasetSpec other = spec;
  other.seed = spec.seed + 1;
  CHECK(generate(other)[0].image.data != a[0].image.data);
}

TEST_CASE("pixel values stay inside their class texture bounds") {
  DatasetSpec spec;
  spec.num_images = 12;
  const auto corpus = generate(spec);
  for (const auto& item : corpus) {
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        const int class_id = item.mask.at(r, c);
        const double base = spec.class_base(class_id);
        const double lo = std::max(0.0, base - spec.texture_noise);
        const double hi = std::min(1.0, base + spec.texture_noise);
        CHECK(item.image.at(r, c) >= lo);
        CHECK(item.image.at(r, c) <= hi);
      }
    }
  }
}

TEST_CASE("every class appears in the corpus") {
  DatasetSpec spec;
  spec.num_images = 16;
  const auto corpus = generate(spec);
  std::set<int> seen;
  for (const auto& item : corpus) {
    for (int label : item.mask.labels) seen.insert(label);
  }
  for (int c = 0; c < spec.num_classes; ++c) CHECK(seen.count(c) == 1);
}

TEST_CASE("confusable pair bases differ by the configured gap") {
  DatasetSpec spec;
  CHECK(spec.class_base(spec.num_classes - 1) ==
        Catch::Approx(spec.class_base(1) + spec.confusable_gap));
}

TEST_CASE("partition arithmetic, determinism, coverage") {
  DatasetSpec spec;
  spec.num_images = 160;
  const auto corpus = generate(spec);

  const auto [labeled, unlabeled] = partition(corpus, 1.0 / 16.0, 9);
  CHECK(labeled.size() == 10);
  CHECK(unlabeled.size() == 150);

  // disjoint and covering
  std::set<int> all(labeled.begin(), labeled.end());
  for (int idx : unlabeled) CHECK(all.insert(idx).second);
  CHECK(all.size() == corpus.size());

  const auto again = partition(corpus, 1.0 / 16.0, 9);
  CHECK(again.first == labeled);
  CHECK(again.second == unlabeled);

  const auto [full, empty] = partition(corpus, 1.0, 9);
  CHECK(full.size() == corpus.size());
  CHECK(empty.empty());

  // labeled subset covers every class present in the corpus
  std::set<int> covered;
  for (int idx : labeled) {
    for (int label : corpus[idx].mask.labels) covered.insert(label);
  }
  for (int c = 0; c < spec.num_classes; ++c) CHECK(covered.count(c) == 1);
}

TEST_CASE("partition fails deterministically when coverage is impossible") {
  // two images with disjoint single classes; half split can never cover both
  std::vector<LabeledImage> corpus(2);
  corpus[0].image = Tensor2D(4, 4, 0.5);
  corpus[0].mask = SegmentationMask(4, 4, 1);
  corpus[1].image = Tensor2D(4, 4, 0.5);
  corpus[1].mask = SegmentationMask(4, 4, 2);
  CHECK_THROWS_WITH(partition(corpus, 0.5, 1), "labeled split missing class");
}

TEST_CASE("dataset directory round-trip") {
  DatasetSpec spec;
  spec.num_images = 8;
  spec.val_images = 3;
  const Dataset ds = build_dataset(spec, 0.25, 5);

  const fs::path dir = fs::temp_directory_path() / "pwseg_test_dataset";
  fs::remove_all(dir);
  save_dataset(ds, dir);
  const Dataset loaded = load_dataset(dir);

  CHECK(loaded.spec.num_classes == spec.num_classes);
  CHECK(loaded.partition_fraction == ds.partition_fraction);
  CHECK(loaded.labeled_idx == ds.labeled_idx);
  CHECK(loaded.unlabeled_idx == ds.unlabeled_idx);
  REQUIRE(loaded.train.size() == ds.train.size());
  REQUIRE(loaded.val.size() == ds.val.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(loaded.train[i].image.data == ds.train[i].image.data);
    CHECK(loaded.train[i].mask.labels == ds.train[i].mask.labels);
  }
  for (std::size_t i = 0; i < ds.val.size(); ++i) {
    CHECK(loaded.val[i].image.data == ds.val[i].image.data);
  }
  fs::remove_all(dir);
}

TEST_CASE("saving under a missing parent fails loudly") {
  DatasetSpec spec;
  spec.num_images = 1;
  spec.val_images = 0;
  const Dataset ds = build_dataset(spec, 1.0, 1);
  CHECK_THROWS(save_dataset(ds, "/root/proj/does_not_exist/nested/dir"));
}

TEST_CASE("invalid specs are rejected") {
  DatasetSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = DatasetSpec{};
  spec.shape_size_min = 10;
  spec.shape_size_max = 5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
