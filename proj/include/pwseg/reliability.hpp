#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pwseg/maskgeom.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

enum class ReliableSource : std::uint8_t { none = 0, agreement = 1, labeled = 2 };

// Per-pixel reliability: set where the detector and segmenter agree on the
// class and the teacher confidence clears tau.
struct ReliabilityMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> reliable;
  std::vector<std::uint8_t> source;

  ReliabilityMask() = default;
  ReliabilityMask(int r, int c)
      : rows(r),
        cols(c),
        reliable(static_cast<std::size_t>(r) * c, 0),
        source(static_cast<std::size_t>(r) * c,
               static_cast<std::uint8_t>(ReliableSource::none)) {}

  bool at(int r, int c) const { return reliable[static_cast<std::size_t>(r) * cols + c]; }
  void set(int r, int c, ReliableSource s) {
    const std::size_t i = static_cast<std::size_t>(r) * cols + c;
    reliable[i] = 1;
    source[i] = static_cast<std::uint8_t>(s);
  }
  long long count() const {
    long long n = 0;
    for (auto v : reliable) n += v;
    return n;
  }
};

// A pixel is reliable iff conf >= tau and some box of the pseudo-label's
// class contains it. Classes without detector coverage never qualify here;
// their reliable pixels come only from labeled images.
inline ReliabilityMask reliable_pixels(const SegmentationMask& pseudo,
                                       const Tensor2D& conf,
                                       const std::vector<LabeledBox>& boxes, double tau) {
  if (pseudo.rows != conf.rows || pseudo.cols != conf.cols) {
    throw std::invalid_argument("reliable_pixels: dimension mismatch");
  }
  if (tau <= 0.0 || tau > 1.0) {
    throw std::invalid_argument("reliable_pixels: tau must be in (0, 1]");
  }
  ReliabilityMask mask(pseudo.rows, pseudo.cols);
  for (const auto& box : boxes) {
    const int r0 = std::max(0, box.rect.row_min);
    const int r1 = std::min(pseudo.rows - 1, box.rect.row_max);
    const int c0 = std::max(0, box.rect.col_min);
    const int c1 = std::min(pseudo.cols - 1, box.rect.col_max);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (pseudo.at(r, c) == box.class_id && conf.at(r, c) >= tau) {
          mask.set(r, c, ReliableSource::agreement);
        }
      }
    }
  }
  return mask;
}

}  // namespace pwseg
