#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pwseg {

// Per-pixel feature embedding (the z vectors compared against prototypes).
using FeatureVector = std::vector<double>;

constexpr double kLogClamp = 1e-12;

inline bool all_finite(const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) return false;
  }
  return true;
}

inline bool all_finite(const std::vector<double>& v) {
  return all_finite(v.data(), v.size());
}

// Dense row-major 2-D grid of doubles (images, confidence maps, weight maps).
struct Tensor2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2D() = default;
  Tensor2D(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative tensor dims");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
};

// Row-major 3-D grid, channel-fastest: the per-pixel channel vector is
// contiguous so it can be handed around as a feature vector.
struct Tensor3D {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3D() = default;
  Tensor3D(int r, int c, int ch, double fill = 0.0)
      : rows(r),
        cols(c),
        channels(ch),
        data(static_cast<std::size_t>(r) * c * ch, fill) {
    if (r < 0 || c < 0 || ch < 0) throw std::invalid_argument("negative tensor dims");
  }

  double& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  const double* pixel(int r, int c) const {
    return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
  }
  double* pixel(int r, int c) {
    return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
  }
  FeatureVector pixel_vector(int r, int c) const {
    const double* p = pixel(r, c);
    return FeatureVector(p, p + channels);
  }
};

// Per-pixel class labels. ignore_value marks pixels excluded from losses and
// metrics; generated ground truth never contains it but pipelines may.
struct SegmentationMask {
  int rows = 0;
  int cols = 0;
  int ignore_value = 255;
  std::vector<int> labels;

  SegmentationMask() = default;
  SegmentationMask(int r, int c, int fill = 0)
      : rows(r), cols(c), labels(static_cast<std::size_t>(r) * c, fill) {}

  int& at(int r, int c) { return labels[static_cast<std::size_t>(r) * cols + c]; }
  int at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return labels.size(); }
};

// Numerically stable softmax into a caller-provided buffer.
inline void softmax_into(const double* logits, int n, double* out) {
  double max_v = logits[0];
  for (int i = 1; i < n; ++i) max_v = std::max(max_v, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - max_v);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

inline FeatureVector softmax(const FeatureVector& logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  if (!all_finite(logits)) throw std::invalid_argument("non-finite logits");
  FeatureVector out(logits.size());
  softmax_into(logits.data(), static_cast<int>(logits.size()), out.data());
  return out;
}

inline double cross_entropy(const FeatureVector& probs, int target_class) {
  if (target_class < 0 || target_class >= static_cast<int>(probs.size())) {
    throw std::invalid_argument("cross_entropy: target class " +
                                std::to_string(target_class) + " out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(target_class)], kLogClamp));
}

}  // namespace pwseg
