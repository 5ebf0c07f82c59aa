#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

// Procedural corpus of textured geometric shapes on a noisy background.
// Class 0 is background; foreground classes 1..C-1 get evenly spaced base
// intensities, except the last, which sits confusable_gap above class 1 so
// one pair of classes is genuinely hard to tell apart.
struct DatasetSpec {
  int num_images = 160;
  int val_images = 40;
  int height = 32;
  int width = 32;
  int num_classes = 5;  // including background class 0
  int shapes_min = 1;
  int shapes_max = 3;
  int shape_size_min = 10;
  int shape_size_max = 18;
  double background_base = 0.15;
  double texture_noise = 0.06;  // uniform +- bound on every pixel
  double confusable_gap = 0.05;
  // Mixing amplitude of the one-pixel boundary ring of each shape: ring
  // pixels blend the shape texture with what they cover while keeping the
  // shape's label, so object edges look ambiguous the way real ones do.
  double edge_blend = 0.7;
  // Sampling weight of the last foreground class relative to the others.
  // Keeping the confusable class rare mirrors the rare-and-confusable
  // categories real corpora have, where pseudo-label noise concentrates.
  double rare_class_factor = 0.35;
  std::uint64_t seed = 1;

  // Background sits clearly below every foreground class; the last
  // foreground class sits confusable_gap above class 1, giving one genuinely
  // ambiguous pair while the rest are well separated.
  double class_base(int class_id) const {
    if (class_id == 0) return background_base;
    const int fg = num_classes - 1;
    if (fg == 1) return 0.6;
    if (class_id == fg) return class_base(1) + confusable_gap;
    if (fg == 2) return 0.6;  // one spread class + the confusable partner
    return 0.35 + 0.5 * (class_id - 1) / static_cast<double>(fg - 2);
  }

  void validate() const {
    std::vector<std::string> problems;
    if (num_classes < 2) problems.push_back("num_classes must be >= 2");
    if (num_images < 1) problems.push_back("num_images must be >= 1");
    if (val_images < 0) problems.push_back("val_images must be >= 0");
    if (height < 1 || width < 1) problems.push_back("image dims must be >= 1");
    if (shapes_min < 0 || shapes_max < shapes_min) {
      problems.push_back("invalid shapes_min/shapes_max");
    }
    if (shape_size_min < 1 || shape_size_max < shape_size_min) {
      problems.push_back("invalid shape_size_min/shape_size_max");
    }
    if (texture_noise < 0.0) problems.push_back("texture_noise must be >= 0");
    if (edge_blend < 0.0 || edge_blend > 1.0) {
      problems.push_back("edge_blend must be in [0, 1]");
    }
    if (rare_class_factor <= 0.0 || rare_class_factor > 1.0) {
      problems.push_back("rare_class_factor must be in (0, 1]");
    }
    if (!problems.empty()) {
      std::string msg = "invalid dataset spec:";
      for (const auto& p : problems) msg += " " + p + ";";
      throw std::invalid_argument(msg);
    }
  }
};

struct LabeledImage {
  Tensor2D image;
  SegmentationMask mask;
};

namespace detail {

enum class ShapeKind { rectangle = 0, disk = 1, triangle = 2 };

inline bool shape_contains(ShapeKind kind, int r0, int c0, int h, int w, int r, int c) {
  if (r < r0 || r >= r0 + h || c < c0 || c >= c0 + w) return false;
  switch (kind) {
    case ShapeKind::rectangle:
      return true;
    case ShapeKind::disk: {
      const double cr = r0 + (h - 1) / 2.0, cc = c0 + (w - 1) / 2.0;
      const double dr = (r - cr) / (h / 2.0), dc = (c - cc) / (w / 2.0);
      return dr * dr + dc * dc <= 1.0;
    }
    case ShapeKind::triangle: {
      // isoceles, apex at the top row, base at the bottom row
      const double frac = (r - r0 + 1) / static_cast<double>(h);
      const double cc = c0 + (w - 1) / 2.0;
      return std::abs(c - cc) <= frac * (w / 2.0);
    }
  }
  return false;
}

inline void paint_shape(Tensor2D& image, SegmentationMask& mask, ShapeKind kind,
                        int class_id, int r0, int c0, int h, int w, double base,
                        const DatasetSpec& spec, Rng& rng) {
  const auto inside = [&](int r, int c) {
    return shape_contains(kind, r0, c0, h, w, r, c);
  };
  for (int r = r0; r < r0 + h; ++r) {
    for (int c = c0; c < c0 + w; ++c) {
      if (!inside(r, c)) continue;
      double value =
          std::clamp(base + rng.uniform(-spec.texture_noise, spec.texture_noise), 0.0, 1.0);
      // graded two-pixel boundary band: the outermost ring blends hardest
      if (spec.edge_blend > 0.0) {
        const bool ring1 = !inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) ||
                           !inside(r, c + 1);
        const bool ring2 = !ring1 && (!inside(r - 2, c) || !inside(r + 2, c) ||
                                      !inside(r, c - 2) || !inside(r, c + 2));
        if (ring1 || ring2) {
          const double amp = ring1 ? spec.edge_blend : 0.5 * spec.edge_blend;
          const double beta = rng.uniform(0.0, amp);
          value = (1.0 - beta) * value + beta * image.at(r, c);
        }
      }
      image.at(r, c) = value;
      mask.at(r, c) = class_id;
    }
  }
}

inline LabeledImage generate_one(const DatasetSpec& spec, std::uint64_t img_seed,
                                 int corpus_index) {
  Rng rng(img_seed);
  LabeledImage out;
  out.image = Tensor2D(spec.height, spec.width);
  out.mask = SegmentationMask(spec.height, spec.width, 0);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      out.image.at(r, c) = std::clamp(
          spec.background_base + rng.uniform(-spec.texture_noise, spec.texture_noise),
          0.0, 1.0);
    }
  }
  const int fg_classes = spec.num_classes - 1;
  if (fg_classes == 0) return out;
  // first-shape classes follow a deterministic schedule: the first C-1
  // images cover every class once, after that the rare class appears on a
  // sparse cadence and the common classes cycle
  const auto first_slot_class = [&spec, fg_classes](int i) {
    if (i < fg_classes) return 1 + i;
    const int commons = fg_classes - 1;
    if (commons == 0) return 1;
    const int stride = std::max(
        commons + 1,
        static_cast<int>(std::llround(fg_classes / spec.rare_class_factor)));
    if (i % stride == stride - 1) return fg_classes;
    return 1 + i % commons;
  };
  const auto weighted_class = [&spec, fg_classes](Rng& r) {
    const int commons = fg_classes - 1;
    if (commons == 0) return 1;
    const double u = r.uniform() * (commons + spec.rare_class_factor);
    return u < commons ? 1 + static_cast<int>(u) : fg_classes;
  };
  const int num_shapes = rng.uniform_int(spec.shapes_min, spec.shapes_max);
  for (int s = 0; s < num_shapes; ++s) {
    const int class_id = s == 0 && corpus_index >= 0 ? first_slot_class(corpus_index)
                                                     : weighted_class(rng);
    const auto kind = static_cast<ShapeKind>(rng.uniform_int(3));
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int h = rng.uniform_int(spec.shape_size_min, spec.shape_size_max);
      const int w = rng.uniform_int(spec.shape_size_min, spec.shape_size_max);
      if (h > spec.height || w > spec.width) continue;
      const int r0 = rng.uniform_int(spec.height - h + 1);
      const int c0 = rng.uniform_int(spec.width - w + 1);
      paint_shape(out.image, out.mask, kind, class_id, r0, c0, h, w,
                  spec.class_base(class_id), spec, rng);
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synthdata: shape placement failed after 100 attempts");
    }
  }
  return out;
}

}  // namespace detail

inline std::vector<LabeledImage> generate(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> out;
  out.reserve(spec.num_images);
  for (int i = 0; i < spec.num_images; ++i) {
    out.push_back(
        detail::generate_one(spec, derive_seed(spec.seed, seed_tag::image, i), i));
  }
  return out;
}

inline std::vector<LabeledImage> generate_val(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> out;
  out.reserve(spec.val_images);
  for (int i = 0; i < spec.val_images; ++i) {
    out.push_back(
        detail::generate_one(spec, derive_seed(spec.seed, seed_tag::val_image, i), i));
  }
  return out;
}

// Uniform labeled/unlabeled split with ceil(fraction*N) labeled images.
// Resamples until every class present anywhere in the corpus also appears in
// the labeled subset (up to 100 tries).
inline std::pair<std::vector<int>, std::vector<int>> partition(
    const std::vector<LabeledImage>& corpus, double fraction, std::uint64_t seed) {
  const int n = static_cast<int>(corpus.size());
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("partition: fraction must be in (0, 1]");
  }
  const int labeled_count = static_cast<int>(std::ceil(fraction * n));
  if (labeled_count < 1) throw std::invalid_argument("partition: empty labeled split");

  std::set<int> required;
  for (const auto& item : corpus) {
    for (int label : item.mask.labels) {
      if (label != item.mask.ignore_value) required.insert(label);
    }
  }

  Rng rng(derive_seed(seed, seed_tag::partition));
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<int> labeled(idx.begin(), idx.begin() + labeled_count);
    std::vector<int> unlabeled(idx.begin() + labeled_count, idx.end());
    std::set<int> covered;
    for (int i : labeled) {
      for (int label : corpus[i].mask.labels) {
        if (label != corpus[i].mask.ignore_value) covered.insert(label);
      }
    }
    if (covered == required) {
      std::sort(labeled.begin(), labeled.end());
      std::sort(unlabeled.begin(), unlabeled.end());
      return {labeled, unlabeled};
    }
  }
  throw std::runtime_error("labeled split missing class");
}

struct Dataset {
  DatasetSpec spec;
  double partition_fraction = 1.0;
  std::uint64_t partition_seed = 1;
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> val;
  std::vector<int> labeled_idx;
  std::vector<int> unlabeled_idx;
};

inline Dataset build_dataset(const DatasetSpec& spec, double fraction,
                             std::uint64_t partition_seed) {
  Dataset ds;
  ds.spec = spec;
  ds.partition_fraction = fraction;
  ds.partition_seed = partition_seed;
  ds.train = generate(spec);
  ds.val = generate_val(spec);
  std::tie(ds.labeled_idx, ds.unlabeled_idx) = partition(ds.train, fraction, partition_seed);
  return ds;
}

}  // namespace pwseg
