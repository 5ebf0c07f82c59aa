#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwseg/ranksim.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long long> counts;  // row = ground truth, col = prediction

  explicit ConfusionMatrix(int c)
      : num_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

  void add(const SegmentationMask& gt, const SegmentationMask& pred) {
    if (gt.rows != pred.rows || gt.cols != pred.cols) {
      throw std::invalid_argument("confusion: mask dimension mismatch");
    }
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const int g = gt.labels[i];
      if (g == gt.ignore_value) continue;
      const int p = pred.labels[i];
      counts[static_cast<std::size_t>(g) * num_classes + p] += 1;
    }
  }

  long long at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  long long total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
  }
};

struct IouReport {
  std::vector<double> per_class;  // NaN where the class union is empty
  double mean = 0.0;
  int classes_counted = 0;
};

inline IouReport iou_from_confusion(const ConfusionMatrix& cm) {
  IouReport report;
  report.per_class.assign(cm.num_classes, std::nan(""));
  double sum = 0.0;
  for (int c = 0; c < cm.num_classes; ++c) {
    const long long tp = cm.at(c, c);
    long long fp = 0, fn = 0;
    for (int o = 0; o < cm.num_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const long long uni = tp + fp + fn;
    if (uni == 0) continue;  // class absent from both pred and gt
    report.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += report.per_class[c];
    report.classes_counted += 1;
  }
  report.mean = report.classes_counted > 0 ? sum / report.classes_counted : 0.0;
  return report;
}

inline IouReport miou(const SegmentationMask& pred, const SegmentationMask& gt,
                      int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(gt, pred);
  return iou_from_confusion(cm);
}

struct SelectionAccuracy {
  bool defined = false;
  double accuracy = 0.0;
  long long correct = 0;
  long long count = 0;
  long long incorrect() const { return count - correct; }
};

// Accuracy of the pseudo-labels over the selected pixels; ignore-valued
// ground truth pixels are never counted.
inline SelectionAccuracy pseudo_label_accuracy(const SegmentationMask& pseudo,
                                               const SegmentationMask& gt,
                                               const std::vector<std::uint8_t>& selection) {
  if (pseudo.rows != gt.rows || pseudo.cols != gt.cols ||
      selection.size() != gt.size()) {
    throw std::invalid_argument("pseudo_label_accuracy: dimension mismatch");
  }
  long long correct = 0, count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!selection[i] || gt.labels[i] == gt.ignore_value) continue;
    count += 1;
    correct += pseudo.labels[i] == gt.labels[i];
  }
  SelectionAccuracy out;
  out.count = count;
  out.correct = correct;
  if (count > 0) {
    out.defined = true;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(count);
  }
  return out;
}

struct HistBin {
  long long correct = 0;
  long long incorrect = 0;
};

// Equal-width confidence bins over [0,1]; confidence 1.0 lands in the last bin.
inline std::vector<HistBin> confidence_correctness_histogram(
    const Tensor2D& conf, const SegmentationMask& pseudo, const SegmentationMask& gt,
    int bins) {
  if (bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  if (conf.rows != gt.rows || conf.cols != gt.cols || pseudo.rows != gt.rows ||
      pseudo.cols != gt.cols) {
    throw std::invalid_argument("histogram: dimension mismatch");
  }
  std::vector<HistBin> hist(bins);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.labels[i] == gt.ignore_value) continue;
    int bin = static_cast<int>(conf.data[i] * bins);
    bin = std::min(std::max(bin, 0), bins - 1);
    if (pseudo.labels[i] == gt.labels[i]) {
      hist[bin].correct += 1;
    } else {
      hist[bin].incorrect += 1;
    }
  }
  return hist;
}

// Stability of per-class feature snapshots across training: how much the
// raw values move versus how much the top-k index sets move.
struct ClassStability {
  int class_id = -1;
  int snapshots = 0;
  double value_variance = 0.0;       // mean over dims of per-dim variance
  double norm_value_variance = 0.0;  // mean over dims of var/(var + mean^2), in [0,1)
  double mean_hamming = 0.0;         // mean top-k hamming distance to the mean prototype
  double norm_index_instability = 0.0;  // mean_hamming / (2k), in [0,1]
};

inline std::vector<ClassStability> prototype_stability(
    const std::map<int, std::vector<FeatureVector>>& history, int k) {
  std::vector<ClassStability> out;
  for (const auto& [class_id, snaps] : history) {
    if (snaps.size() < 2) {
      throw std::invalid_argument("prototype_stability: need >= 2 snapshots per class");
    }
    const int dim = static_cast<int>(snaps.front().size());
    const int n = static_cast<int>(snaps.size());
    FeatureVector mean(dim, 0.0);
    for (const auto& s : snaps) {
      for (int d = 0; d < dim; ++d) mean[d] += s[d];
    }
    for (int d = 0; d < dim; ++d) mean[d] /= n;

    ClassStability stat;
    stat.class_id = class_id;
    stat.snapshots = n;
    double var_sum = 0.0, norm_sum = 0.0;
    for (int d = 0; d < dim; ++d) {
      double var = 0.0;
      for (const auto& s : snaps) {
        const double diff = s[d] - mean[d];
        var += diff * diff;
      }
      var /= n;
      var_sum += var;
      norm_sum += var / (var + mean[d] * mean[d] + 1e-30);
    }
    stat.value_variance = var_sum / dim;
    stat.norm_value_variance = norm_sum / dim;

    double ham = 0.0;
    for (const auto& s : snaps) ham += hamming_topk(s, mean, k);
    stat.mean_hamming = ham / n;
    stat.norm_index_instability = stat.mean_hamming / (2.0 * k);
    out.push_back(stat);
  }
  return out;
}

inline std::string stability_csv(const std::vector<ClassStability>& stats) {
  std::string out =
      "class_id,snapshots,value_variance,norm_value_variance,mean_hamming,"
      "norm_index_instability\n";
  char buf[256];
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", s.class_id,
                  s.snapshots, s.value_variance, s.norm_value_variance, s.mean_hamming,
                  s.norm_index_instability);
    out += buf;
  }
  return out;
}

}  // namespace pwseg
