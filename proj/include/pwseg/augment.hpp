#pragma once

#include <algorithm>
#include <cstdint>

#include "pwseg/maskgeom.hpp"
#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

struct AugmentedImage {
  Tensor2D image;
  bool hflip = false;
};

inline SegmentationMask hflip_mask(const SegmentationMask& mask) {
  SegmentationMask out = mask;
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      out.at(r, c) = mask.at(r, mask.cols - 1 - c);
    }
  }
  return out;
}

inline PixelRect hflip_rect(const PixelRect& rect, int image_cols) {
  return PixelRect{rect.row_min, image_cols - 1 - rect.col_max, rect.row_max,
                   image_cols - 1 - rect.col_min};
}

// Weak view: horizontal flip with p=0.5 plus Gaussian pixel noise sigma=0.01.
inline AugmentedImage weak_augment(const Tensor2D& image, std::uint64_t seed) {
  Rng rng(seed);
  AugmentedImage out;
  out.hflip = rng.uniform() < 0.5;
  out.image = Tensor2D(image.rows, image.cols);
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      const double v = out.hflip ? image.at(r, image.cols - 1 - c) : image.at(r, c);
      out.image.at(r, c) = v + rng.normal(0.0, 0.01);
    }
  }
  return out;
}

// Strong view: the weak view for the same seed (so geometry stays aligned
// with the pseudo-labels) plus a global value jitter and one rectangular
// cutout covering up to 25% of the area. The jitter amplitude stays below
// the inter-class intensity gaps; larger shifts would relabel classes
// outright on intensity-coded textures.
inline AugmentedImage strong_augment(const Tensor2D& image, std::uint64_t seed) {
  AugmentedImage out = weak_augment(image, seed);
  Rng rng(derive_seed(seed, seed_tag::strong_extra));
  const double jitter = rng.uniform(-0.05, 0.05);
  for (double& v : out.image.data) v += jitter;
  const int max_h = std::max(1, image.rows / 2);
  const int max_w = std::max(1, image.cols / 2);
  const int h = rng.uniform_int(1, max_h);
  const int w = rng.uniform_int(1, max_w);
  const int r0 = rng.uniform_int(image.rows - h + 1);
  const int c0 = rng.uniform_int(image.cols - w + 1);
  for (int r = r0; r < r0 + h; ++r) {
    for (int c = c0; c < c0 + w; ++c) out.image.at(r, c) = 0.0;
  }
  return out;
}

}  // namespace pwseg
