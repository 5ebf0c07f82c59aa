#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pwseg/tensor.hpp"

namespace pwseg {

// Inclusive integer pixel rectangle; area = (dr+1)*(dc+1).
struct PixelRect {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  long long area() const {
    return static_cast<long long>(row_max - row_min + 1) * (col_max - col_min + 1);
  }
  bool contains(int r, int c) const {
    return r >= row_min && r <= row_max && c >= col_min && c <= col_max;
  }
  bool operator==(const PixelRect& o) const {
    return row_min == o.row_min && col_min == o.col_min && row_max == o.row_max &&
           col_max == o.col_max;
  }
};

struct LabeledBox {
  int class_id = -1;
  PixelRect rect;
  double confidence = 1.0;
};

using PixelSet = std::vector<std::pair<int, int>>;  // (row, col), row-major sorted

// Maximal 4-connected components of the given class, ordered by their
// top-left (row-major first) pixel; pixels within a component are row-major.
inline std::vector<PixelSet> connected_components(const SegmentationMask& mask,
                                                  int class_id) {
  const int rows = mask.rows, cols = mask.cols;
  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<PixelSet> components;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      if (visited[idx] || mask.labels[idx] != class_id) continue;
      PixelSet comp;
      stack.clear();
      stack.emplace_back(r, c);
      visited[idx] = 1;
      while (!stack.empty()) {
        auto [cr, cc] = stack.back();
        stack.pop_back();
        comp.emplace_back(cr, cc);
        constexpr int dr[4] = {-1, 1, 0, 0};
        constexpr int dc[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int nr = cr + dr[d], nc = cc + dc[d];
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          const std::size_t nidx = static_cast<std::size_t>(nr) * cols + nc;
          if (visited[nidx] || mask.labels[nidx] != class_id) continue;
          visited[nidx] = 1;
          stack.emplace_back(nr, nc);
        }
      }
      std::sort(comp.begin(), comp.end());
      components.push_back(std::move(comp));
    }
  }
  return components;
}

// One tight box per connected component per class, skipping excluded classes
// and the mask's ignore value. Pseudo-ground-truth boxes carry confidence 1.
inline std::vector<LabeledBox> boxes_from_mask(const SegmentationMask& mask,
                                               const std::set<int>& excluded_classes) {
  std::set<int> classes;
  for (int label : mask.labels) {
    if (label == mask.ignore_value) continue;
    if (excluded_classes.count(label)) continue;
    classes.insert(label);
  }
  std::vector<LabeledBox> boxes;
  for (int class_id : classes) {
    for (const PixelSet& comp : connected_components(mask, class_id)) {
      PixelRect rect{comp.front().first, comp.front().second, comp.front().first,
                     comp.front().second};
      for (auto [r, c] : comp) {
        rect.row_min = std::min(rect.row_min, r);
        rect.col_min = std::min(rect.col_min, c);
        rect.row_max = std::max(rect.row_max, r);
        rect.col_max = std::max(rect.col_max, c);
      }
      boxes.push_back(LabeledBox{class_id, rect, 1.0});
    }
  }
  return boxes;
}

inline double iou(const PixelRect& a, const PixelRect& b) {
  const int ir_min = std::max(a.row_min, b.row_min);
  const int ic_min = std::max(a.col_min, b.col_min);
  const int ir_max = std::min(a.row_max, b.row_max);
  const int ic_max = std::min(a.col_max, b.col_max);
  if (ir_min > ir_max || ic_min > ic_max) return 0.0;
  const long long inter =
      static_cast<long long>(ir_max - ir_min + 1) * (ic_max - ic_min + 1);
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct ClassBoxAccuracy {
  int correct = 0;
  int total = 0;  // predicted boxes of this class
  double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

// Box-level accuracy: a predicted box is correct iff it greedily matches a
// same-class ground-truth box with IoU >= iou_thresh. Matching is by
// descending IoU, ties by (pred index, gt index); each GT box is consumed once.
inline std::map<int, ClassBoxAccuracy> box_accuracy(const std::vector<LabeledBox>& pred,
                                                    const std::vector<LabeledBox>& gt,
                                                    double iou_thresh) {
  std::map<int, ClassBoxAccuracy> result;
  for (const auto& p : pred) result[p.class_id].total += 1;
  for (const auto& g : gt) result.try_emplace(g.class_id);

  struct Pair {
    double iou_value;
    int pred_idx;
    int gt_idx;
  };
  std::vector<Pair> pairs;
  for (int pi = 0; pi < static_cast<int>(pred.size()); ++pi) {
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
      if (pred[pi].class_id != gt[gi].class_id) continue;
      const double v = iou(pred[pi].rect, gt[gi].rect);
      if (v >= iou_thresh) pairs.push_back(Pair{v, pi, gi});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou_value != b.iou_value) return a.iou_value > b.iou_value;
    if (a.pred_idx != b.pred_idx) return a.pred_idx < b.pred_idx;
    return a.gt_idx < b.gt_idx;
  });
  std::vector<std::uint8_t> pred_used(pred.size(), 0), gt_used(gt.size(), 0);
  for (const Pair& p : pairs) {
    if (pred_used[p.pred_idx] || gt_used[p.gt_idx]) continue;
    pred_used[p.pred_idx] = 1;
    gt_used[p.gt_idx] = 1;
    result[pred[p.pred_idx].class_id].correct += 1;
  }
  return result;
}

inline const char* box_csv_header() {
  return "class_id,row_min,col_min,row_max,col_max,confidence";
}

inline std::string box_csv_row(const LabeledBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%.17g", box.class_id,
                box.rect.row_min, box.rect.col_min, box.rect.row_max,
                box.rect.col_max, box.confidence);
  return buf;
}

inline std::string boxes_to_csv(const std::vector<LabeledBox>& boxes) {
  std::string out = box_csv_header();
  out += '\n';
  for (const auto& b : boxes) {
    out += box_csv_row(b);
    out += '\n';
  }
  return out;
}

}  // namespace pwseg
