#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "pwseg/maskgeom.hpp"
#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

struct CropSample {
  Tensor2D crop;
  int label = 0;
};

// Crop descriptor: the crop is mean-pooled to pool x pool cells, and the
// feature vector is the intensity histogram of those cells (a holistic,
// position-free view of the crop) plus cell mean/std/min/max. Histogram mass
// lets a linear classifier separate a uniform texture from a partially
// covered window, which raw positional cells cannot do at this scale.
constexpr int kCropHistogramBins = 16;

inline int crop_feature_dim(int pool) {
  (void)pool;
  return kCropHistogramBins + 4;
}

inline std::vector<double> pooled_crop_features(const Tensor2D& image,
                                                const PixelRect& rect, int pool) {
  const int h = rect.row_max - rect.row_min + 1;
  const int w = rect.col_max - rect.col_min + 1;
  std::vector<double> cells(static_cast<std::size_t>(pool) * pool);
  for (int i = 0; i < pool; ++i) {
    const int r0 = rect.row_min + i * h / pool;
    const int r1 = std::max(r0 + 1, rect.row_min + (i + 1) * h / pool);
    for (int j = 0; j < pool; ++j) {
      const int c0 = rect.col_min + j * w / pool;
      const int c1 = std::max(c0 + 1, rect.col_min + (j + 1) * w / pool);
      double sum = 0.0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) sum += image.at(r, c);
      }
      cells[static_cast<std::size_t>(i) * pool + j] =
          sum / (static_cast<double>(r1 - r0) * (c1 - c0));
    }
  }
  std::vector<double> out(static_cast<std::size_t>(crop_feature_dim(pool)), 0.0);
  const double inv = 1.0 / static_cast<double>(cells.size());
  double mean = 0.0, lo = cells[0], hi = cells[0];
  for (double v : cells) {
    int bin = static_cast<int>(v * kCropHistogramBins);
    bin = std::clamp(bin, 0, kCropHistogramBins - 1);
    out[bin] += inv;
    mean += v * inv;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double var = 0.0;
  for (double v : cells) var += (v - mean) * (v - mean) * inv;
  out[kCropHistogramBins] = mean;
  out[kCropHistogramBins + 1] = std::sqrt(var);
  out[kCropHistogramBins + 2] = lo;
  out[kCropHistogramBins + 3] = hi;
  return out;
}

// Linear softmax classifier over mean-pooled crop pixels. Label space is the
// segmentation class ids plus a reserved "no object" id == num_classes.
// Deliberately a holistic crop-level model, structurally unlike the per-pixel
// segmentation model it is ensembled with.
class RegionClassifier {
 public:
  RegionClassifier() = default;

  RegionClassifier(int num_classes, int pool, std::uint64_t seed)
      : num_classes_(num_classes), pool_(pool) {
    if (num_classes < 2) throw std::invalid_argument("RegionClassifier: num_classes >= 2");
    if (pool < 1) throw std::invalid_argument("RegionClassifier: pool >= 1");
    params_.resize(param_count(num_classes, pool));
    Rng rng(seed);
    for (double& p : params_) p = rng.uniform(-0.1, 0.1);
  }

  static std::size_t param_count(int num_classes, int pool) {
    const int outputs = num_classes + 1;
    return static_cast<std::size_t>(outputs) * crop_feature_dim(pool) + outputs;
  }

  int num_classes() const { return num_classes_; }
  int no_object_class() const { return num_classes_; }
  int pool() const { return pool_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  void logits_for(const std::vector<double>& features, std::vector<double>* logits) const {
    const int outputs = num_classes_ + 1;
    const int dim = crop_feature_dim(pool_);
    logits->resize(outputs);
    const double* w = params_.data();
    const double* b = w + static_cast<std::size_t>(outputs) * dim;
    for (int o = 0; o < outputs; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * dim;
      double acc = b[o];
      for (int i = 0; i < dim; ++i) acc += row[i] * features[i];
      (*logits)[o] = acc;
    }
  }

  // (class, softmax confidence) for one crop; ties -> lowest class id.
  std::pair<int, double> classify(const Tensor2D& image, const PixelRect& rect) const {
    const auto features = pooled_crop_features(image, rect, pool_);
    std::vector<double> logits, probs(num_classes_ + 1);
    logits_for(features, &logits);
    softmax_into(logits.data(), num_classes_ + 1, probs.data());
    int best = 0;
    for (int o = 1; o < num_classes_ + 1; ++o) {
      if (logits[o] > logits[best]) best = o;
    }
    return {best, probs[best]};
  }

 private:
  int num_classes_ = 0;
  int pool_ = 8;
  bool trained_ = false;
  std::vector<double> params_;
};

// Positive crops from mask component boxes plus background negatives whose
// IoU against every ground-truth box is < 0.3, labeled "no object". Each box
// also contributes window-sized positives jittered around it so the
// classifier sees the loose framing that sliding-window detection produces.
inline std::vector<CropSample> make_detection_trainset(
    const std::vector<const Tensor2D*>& images,
    const std::vector<const SegmentationMask*>& masks,
    const std::set<int>& excluded_classes, int num_classes, std::uint64_t seed,
    int negatives_per_image = 4, const std::vector<int>& scales = {8, 16},
    int jittered_per_box = 4) {
  if (images.empty() || images.size() != masks.size()) {
    throw std::invalid_argument("make_detection_trainset: empty or mismatched inputs");
  }
  std::vector<CropSample> out;
  Rng rng(derive_seed(seed, seed_tag::negatives));
  const auto copy_crop = [](const Tensor2D& image, const PixelRect& rect) {
    Tensor2D crop(rect.row_max - rect.row_min + 1, rect.col_max - rect.col_min + 1);
    for (int r = 0; r < crop.rows; ++r) {
      for (int c = 0; c < crop.cols; ++c) {
        crop.at(r, c) = image.at(rect.row_min + r, rect.col_min + c);
      }
    }
    return crop;
  };
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Tensor2D& image = *images[n];
    const SegmentationMask& mask = *masks[n];
    if (image.rows != mask.rows || image.cols != mask.cols) {
      throw std::invalid_argument("make_detection_trainset: image/mask size mismatch");
    }
    const auto gt_boxes = boxes_from_mask(mask, excluded_classes);
    const auto max_iou_vs_gt = [&gt_boxes](const PixelRect& rect) {
      double best = 0.0;
      for (const auto& box : gt_boxes) best = std::max(best, iou(rect, box.rect));
      return best;
    };
    for (const auto& box : gt_boxes) {
      out.push_back(CropSample{copy_crop(image, box.rect), box.class_id});
      // window-sized views at the scale whose best placement maximizes IoU
      const int box_h = box.rect.row_max - box.rect.row_min + 1;
      const int box_w = box.rect.col_max - box.rect.col_min + 1;
      int s = scales.front();
      double s_iou = -1.0;
      for (int candidate : scales) {
        if (candidate > image.rows || candidate > image.cols) continue;
        const double inter = std::min(candidate, box_h) * std::min(candidate, box_w);
        const double uni = static_cast<double>(candidate) * candidate +
                           static_cast<double>(box_h) * box_w - inter;
        if (inter / uni > s_iou) {
          s_iou = inter / uni;
          s = candidate;
        }
      }
      if (s_iou < 0.0) continue;
      for (int j = 0; j < jittered_per_box; ++j) {
        for (int attempt = 0; attempt < 20; ++attempt) {
          const int center_r = (box.rect.row_min + box.rect.row_max) / 2;
          const int center_c = (box.rect.col_min + box.rect.col_max) / 2;
          const int r0 = std::clamp(center_r - s / 2 + rng.uniform_int(-2, 2), 0,
                                    image.rows - s);
          const int c0 = std::clamp(center_c - s / 2 + rng.uniform_int(-2, 2), 0,
                                    image.cols - s);
          const PixelRect rect{r0, c0, r0 + s - 1, c0 + s - 1};
          if (iou(rect, box.rect) < 0.4 && iou(rect, box.rect) < 0.8 * s_iou) continue;
          out.push_back(CropSample{copy_crop(image, rect), box.class_id});
          break;
        }
      }
    }
    // negatives: clear-background windows plus partial-overlap boundary
    // windows, both with IoU < 0.3 against every ground-truth box
    int negatives = 0;
    for (int attempt = 0; attempt < negatives_per_image * 20 && negatives < negatives_per_image;
         ++attempt) {
      const int s = scales[rng.uniform_int(static_cast<int>(scales.size()))];
      if (s > image.rows || s > image.cols) continue;
      const bool boundary = !gt_boxes.empty() && attempt % 2 == 1;
      int r0, c0;
      if (boundary) {
        const auto& box = gt_boxes[rng.uniform_int(static_cast<int>(gt_boxes.size()))];
        r0 = std::clamp(box.rect.row_min + rng.uniform_int(-s, s), 0, image.rows - s);
        c0 = std::clamp(box.rect.col_min + rng.uniform_int(-s, s), 0, image.cols - s);
      } else {
        r0 = rng.uniform_int(image.rows - s + 1);
        c0 = rng.uniform_int(image.cols - s + 1);
      }
      const PixelRect rect{r0, c0, r0 + s - 1, c0 + s - 1};
      const double overlap = max_iou_vs_gt(rect);
      if (overlap >= 0.3) continue;
      if (boundary && overlap == 0.0) continue;
      out.push_back(CropSample{copy_crop(image, rect), num_classes});
      ++negatives;
    }
  }
  return out;
}

// Full-batch gradient descent on softmax cross-entropy over pooled crops.
inline RegionClassifier train_region_classifier(const std::vector<CropSample>& trainset,
                                                int num_classes, int epochs, double lr,
                                                std::uint64_t seed, int pool = 8) {
  std::set<int> labels;
  for (const auto& s : trainset) labels.insert(s.label);
  if (labels.size() < 2) {
    throw std::invalid_argument("train_region_classifier: trainset needs >= 2 classes");
  }
  RegionClassifier model(num_classes, pool, derive_seed(seed, seed_tag::detector));
  const int outputs = num_classes + 1;
  const int dim = crop_feature_dim(pool);
  std::vector<std::vector<double>> features;
  features.reserve(trainset.size());
  for (const auto& s : trainset) {
    const PixelRect full{0, 0, s.crop.rows - 1, s.crop.cols - 1};
    features.push_back(pooled_crop_features(s.crop, full, pool));
  }
  std::vector<double> logits(outputs), probs(outputs);
  std::vector<double> grad(model.parameters().size());
  const double scale = 1.0 / static_cast<double>(trainset.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t n = 0; n < trainset.size(); ++n) {
      model.logits_for(features[n], &logits);
      softmax_into(logits.data(), outputs, probs.data());
      const int target = trainset[n].label;
      double* g_w = grad.data();
      double* g_b = g_w + static_cast<std::size_t>(outputs) * dim;
      for (int o = 0; o < outputs; ++o) {
        const double d = scale * (probs[o] - (o == target ? 1.0 : 0.0));
        double* row = g_w + static_cast<std::size_t>(o) * dim;
        for (int i = 0; i < dim; ++i) row[i] += d * features[n][i];
        g_b[o] += d;
      }
    }
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  }
  model.mark_trained();
  return model;
}

// Sliding-window candidates above the confidence threshold, before NMS.
inline std::vector<LabeledBox> detect_candidates(const RegionClassifier& model,
                                                 const Tensor2D& image,
                                                 const std::vector<int>& grid_scales,
                                                 double conf_thresh) {
  if (!model.trained()) throw std::runtime_error("detect: model not trained");
  std::vector<LabeledBox> candidates;
  for (int s : grid_scales) {
    if (s > image.rows || s > image.cols) continue;
    const int stride = std::max(1, s / 2);
    for (int r = 0; r + s <= image.rows; r += stride) {
      for (int c = 0; c + s <= image.cols; c += stride) {
        const PixelRect rect{r, c, r + s - 1, c + s - 1};
        const auto [cls, conf] = model.classify(image, rect);
        if (cls == model.no_object_class() || conf < conf_thresh) continue;
        candidates.push_back(LabeledBox{cls, rect, conf});
      }
    }
  }
  return candidates;
}

// Greedy per-class NMS: keep by descending confidence, suppress same-class
// boxes with IoU >= iou_thresh. Ties break on box coordinates.
inline std::vector<LabeledBox> nms(std::vector<LabeledBox> boxes, double iou_thresh) {
  std::sort(boxes.begin(), boxes.end(), [](const LabeledBox& a, const LabeledBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.rect.row_min != b.rect.row_min) return a.rect.row_min < b.rect.row_min;
    if (a.rect.col_min != b.rect.col_min) return a.rect.col_min < b.rect.col_min;
    if (a.rect.row_max != b.rect.row_max) return a.rect.row_max < b.rect.row_max;
    return a.rect.col_max < b.rect.col_max;
  });
  std::vector<LabeledBox> kept;
  for (const auto& box : boxes) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == box.class_id && iou(k.rect, box.rect) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(box);
  }
  return kept;
}

inline std::vector<LabeledBox> detect(const RegionClassifier& model, const Tensor2D& image,
                                      const std::vector<int>& grid_scales,
                                      double conf_thresh, double nms_iou = 0.5) {
  return nms(detect_candidates(model, image, grid_scales, conf_thresh), nms_iou);
}

}  // namespace pwseg
