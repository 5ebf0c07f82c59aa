#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pwseg/augment.hpp"
#include "pwseg/detector.hpp"
#include "pwseg/maskgeom.hpp"
#include "pwseg/metrics.hpp"
#include "pwseg/protobank.hpp"
#include "pwseg/ranksim.hpp"
#include "pwseg/reliability.hpp"
#include "pwseg/segmodel.hpp"
#include "pwseg/synthdata.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

enum class Similarity { rank, cosine };

inline const char* to_string(Similarity s) {
  return s == Similarity::rank ? "rank" : "cosine";
}

inline Similarity similarity_from_string(const std::string& s) {
  if (s == "rank") return Similarity::rank;
  if (s == "cosine") return Similarity::cosine;
  throw std::invalid_argument("unknown similarity '" + s + "' (expected rank|cosine)");
}

struct TrainConfig {
  double alpha = 0.4;
  double tau = 0.95;
  int k = 5;
  double bbox_conf = 0.85;
  double ema_momentum = 0.99;
  double lr = 2.0;
  int epochs = 30;
  int batch_labeled = 4;
  int batch_unlabeled = 4;
  std::uint64_t train_seed = 1;
  int bank_capacity = 256;
  int per_image_limit = 32;          // labeled pixels pushed per class per image
  int per_image_limit_unlabeled = 8; // reliable pixels pushed per class per image
  int hidden_dim = 16;
  bool use_rppi = true;
  bool use_ppw = true;
  Similarity similarity = Similarity::rank;
  int det_epochs = 3000;
  double det_lr = 1.5;
  int det_neg_per_image = 4;
  std::vector<int> det_scales = {8, 16};
  double det_nms_iou = 0.5;
  int threads = 0;  // 0 = hardware concurrency; env PSEUDOWEIGHT_THREADS caps

  void validate() const {
    std::vector<std::string> problems;
    if (alpha < 0.0) problems.push_back("alpha must be >= 0");
    if (tau <= 0.0 || tau > 1.0) problems.push_back("tau must be in (0, 1]");
    if (bbox_conf <= 0.0 || bbox_conf > 1.0) problems.push_back("bbox_conf must be in (0, 1]");
    if (ema_momentum < 0.0 || ema_momentum >= 1.0) {
      problems.push_back("ema_momentum must be in [0, 1)");
    }
    if (k < 1 || k > hidden_dim) problems.push_back("k must be in [1, hidden_dim]");
    if (lr <= 0.0) problems.push_back("lr must be > 0");
    if (epochs < 1) problems.push_back("epochs must be >= 1");
    if (batch_labeled < 1 || batch_unlabeled < 1) {
      problems.push_back("batch sizes must be >= 1");
    }
    if (bank_capacity < 1) problems.push_back("bank_capacity must be >= 1");
    if (per_image_limit < 1) problems.push_back("per_image_limit must be >= 1");
    if (per_image_limit_unlabeled < 1) {
      problems.push_back("per_image_limit_unlabeled must be >= 1");
    }
    if (hidden_dim < 1) problems.push_back("hidden_dim must be >= 1");
    if (det_epochs < 0) problems.push_back("det_epochs must be >= 0");
    if (det_lr <= 0.0) problems.push_back("det_lr must be > 0");
    if (det_scales.empty()) problems.push_back("det_scales must be non-empty");
    if (det_nms_iou <= 0.0 || det_nms_iou > 1.0) {
      problems.push_back("det_nms_iou must be in (0, 1]");
    }
    if (!problems.empty()) {
      std::string msg = "invalid train config:";
      for (const auto& p : problems) {
        msg += ' ';
        msg += p;
        msg += ';';
      }
      throw std::invalid_argument(msg);
    }
  }
};

struct EpochMetrics {
  int epoch = 0;
  double miou = std::nan("");
  double pl_acc_conf = std::nan("");
  double pl_acc_weighted = std::nan("");
  double reliable_acc = std::nan("");
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double loss_total = 0.0;
  // not part of the CSV schema; used by analyses and the acceptance suite
  long long conf_count = 0;
  long long conf_incorrect = 0;
  long long weighted_count = 0;
  long long reliable_count = 0;
  double unboxed_acc = std::nan("");
  long long unboxed_count = 0;
};

struct TrainState {
  SegModel student;
  SegModel teacher;
  PrototypeBank bank{1, 0};
  RegionClassifier detector;
  bool detector_trained = false;
  int epoch = 0;
  std::vector<EpochMetrics> history;
  // per-class prototype snapshot per epoch, for stability analyses
  std::map<int, std::vector<FeatureVector>> prototype_history;
};

inline const char* metrics_csv_header() {
  return "epoch,miou,pl_acc_conf,pl_acc_weighted,reliable_acc,loss_sup,loss_unsup,"
         "loss_total";
}

inline std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = metrics_csv_header();
  out += '\n';
  char buf[256];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  m.epoch, m.miou, m.pl_acc_conf, m.pl_acc_weighted, m.reliable_acc,
                  m.loss_sup, m.loss_unsup, m.loss_total);
    out += buf;
  }
  return out;
}

// Mean cross-entropy of the weak-view logits against ground truth over the
// image's non-ignored pixels.
inline double supervised_loss(const Tensor3D& logits, const SegmentationMask& gt) {
  if (logits.rows != gt.rows || logits.cols != gt.cols) {
    throw std::invalid_argument("supervised_loss: dimension mismatch");
  }
  double sum = 0.0;
  long long count = 0;
  std::vector<double> probs(logits.channels);
  for (int r = 0; r < gt.rows; ++r) {
    for (int c = 0; c < gt.cols; ++c) {
      const int target = gt.at(r, c);
      if (target == gt.ignore_value) continue;
      softmax_into(logits.pixel(r, c), logits.channels, probs.data());
      sum += -std::log(std::max(probs[target], kLogClamp));
      count += 1;
    }
  }
  if (count == 0) throw std::runtime_error("no supervised pixels");
  return sum / static_cast<double>(count);
}

// Confidence-gated, weight-scaled cross-entropy of the strong-view logits
// against the pseudo-labels, normalized by W*H over all pixels.
inline double unsupervised_loss(const Tensor3D& logits, const SegmentationMask& pseudo,
                                const Tensor2D& conf, const Tensor2D& weights,
                                double tau) {
  if (logits.rows != pseudo.rows || logits.cols != pseudo.cols ||
      conf.rows != pseudo.rows || conf.cols != pseudo.cols ||
      weights.rows != pseudo.rows || weights.cols != pseudo.cols) {
    throw std::invalid_argument("unsupervised_loss: dimension mismatch");
  }
  double sum = 0.0;
  std::vector<double> probs(logits.channels);
  for (int r = 0; r < pseudo.rows; ++r) {
    for (int c = 0; c < pseudo.cols; ++c) {
      if (conf.at(r, c) < tau) continue;
      const double w = weights.at(r, c);
      if (w == 0.0) continue;
      softmax_into(logits.pixel(r, c), logits.channels, probs.data());
      sum += w * -std::log(std::max(probs[pseudo.at(r, c)], kLogClamp));
    }
  }
  return sum / (static_cast<double>(pseudo.rows) * pseudo.cols);
}

// Per-pixel learning weight against the pseudo-label class prototype.
// Rank arm: shared-top-k fraction s/k. Cosine arm: cosine clamped to [0,1]
// (0 when either vector is all zero). Missing prototype -> neutral weight 1.
inline Tensor2D compute_weight_map(const Tensor3D& features, const SegmentationMask& pseudo,
                                   const std::map<int, ClassPrototype>& prototypes, int k,
                                   Similarity similarity = Similarity::rank) {
  if (features.rows != pseudo.rows || features.cols != pseudo.cols) {
    throw std::invalid_argument("compute_weight_map: dimension mismatch");
  }
  Tensor2D weights(pseudo.rows, pseudo.cols, 1.0);
  if (prototypes.empty()) return weights;
  const int dim = features.channels;
  if (k < 1 || k > dim) throw std::invalid_argument("k exceeds feature dimension");

  struct ProtoInfo {
    const FeatureVector* vec = nullptr;
    std::vector<int> topk;
    double norm = 0.0;
  };
  std::map<int, ProtoInfo> info;
  for (const auto& [class_id, proto] : prototypes) {
    if (static_cast<int>(proto.vector.size()) != dim) {
      throw std::invalid_argument("compute_weight_map: prototype dimension mismatch");
    }
    ProtoInfo pi;
    pi.vec = &proto.vector;
    top_k_indices_into(proto.vector.data(), dim, k, pi.topk);
    double norm = 0.0;
    for (double v : proto.vector) norm += v * v;
    pi.norm = std::sqrt(norm);
    info.emplace(class_id, std::move(pi));
  }

  std::vector<int> pixel_topk;
  for (int r = 0; r < pseudo.rows; ++r) {
    for (int c = 0; c < pseudo.cols; ++c) {
      auto it = info.find(pseudo.at(r, c));
      if (it == info.end()) continue;  // keep neutral weight
      const double* z = features.pixel(r, c);
      if (similarity == Similarity::rank) {
        top_k_indices_into(z, dim, k, pixel_topk);
        weights.at(r, c) =
            static_cast<double>(index_overlap(pixel_topk, it->second.topk)) / k;
      } else {
        double dot = 0.0, norm = 0.0;
        const FeatureVector& p = *it->second.vec;
        for (int d = 0; d < dim; ++d) {
          dot += z[d] * p[d];
          norm += z[d] * z[d];
        }
        const double denom = std::sqrt(norm) * it->second.norm;
        weights.at(r, c) = denom == 0.0 ? 0.0 : std::clamp(dot / denom, 0.0, 1.0);
      }
    }
  }
  return weights;
}

namespace detail {

inline int resolve_threads(int requested) {
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("PSEUDOWEIGHT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

inline long long nonignore_count(const SegmentationMask& mask) {
  long long n = 0;
  for (int label : mask.labels) n += label != mask.ignore_value;
  return n;
}

// Gathers per-class feature lists and pushes them through the bank's
// subsampled FIFO, in ascending class order.
inline void push_class_features(PrototypeBank& bank, const Tensor3D& features,
                                const std::vector<std::pair<int, std::pair<int, int>>>& pixels,
                                int per_image_limit) {
  std::map<int, std::vector<FeatureVector>> by_class;
  for (const auto& [class_id, rc] : pixels) {
    by_class[class_id].push_back(features.pixel_vector(rc.first, rc.second));
  }
  for (auto& [class_id, feats] : by_class) {
    bank.push_features(class_id, feats, per_image_limit);
  }
}

// Shared epoch-end evaluation; pure given the models, so the supervised and
// SSL paths log byte-identical metrics when their trajectories coincide.
inline EpochMetrics evaluate_epoch(const TrainConfig& cfg, const Dataset& ds,
                                   const TrainState& state,
                                   const std::vector<std::vector<LabeledBox>>* boxes_per_unlabeled,
                                   int epoch, double loss_sup, double loss_unsup) {
  EpochMetrics m;
  m.epoch = epoch;
  m.loss_sup = loss_sup;
  m.loss_unsup = loss_unsup;
  m.loss_total = loss_sup + cfg.alpha * loss_unsup;

  const int num_classes = ds.spec.num_classes;
  ConfusionMatrix cm(num_classes);
  SegmentationMask pred;
  for (const auto& item : ds.val) {
    state.teacher.predict(item.image, &pred, nullptr);
    cm.add(item.mask, pred);
  }
  if (!ds.val.empty()) m.miou = iou_from_confusion(cm).mean;

  if (ds.unlabeled_idx.empty()) return m;

  const auto prototypes =
      cfg.use_ppw ? state.bank.all_prototypes() : std::map<int, ClassPrototype>{};
  long long conf_n = 0, conf_ok = 0, w_n = 0, w_ok = 0, rel_n = 0, rel_ok = 0,
            unb_n = 0, unb_ok = 0;
  Tensor3D features, logits;
  SegmentationMask pseudo;
  Tensor2D conf;
  for (std::size_t u = 0; u < ds.unlabeled_idx.size(); ++u) {
    const auto& item = ds.train[ds.unlabeled_idx[u]];
    state.teacher.forward(item.image, &features, &logits);
    state.teacher.predict_from_logits(logits, &pseudo, &conf);
    const Tensor2D weights =
        !prototypes.empty()
            ? compute_weight_map(features, pseudo, prototypes, cfg.k, cfg.similarity)
            : Tensor2D(pseudo.rows, pseudo.cols, 1.0);
    std::vector<std::uint8_t> cover(pseudo.size(), 0);
    if (boxes_per_unlabeled) {
      for (const auto& box : (*boxes_per_unlabeled)[u]) {
        for (int r = box.rect.row_min; r <= box.rect.row_max; ++r) {
          for (int c = box.rect.col_min; c <= box.rect.col_max; ++c) {
            if (pseudo.at(r, c) == box.class_id) {
              cover[static_cast<std::size_t>(r) * pseudo.cols + c] = 1;
            }
          }
        }
      }
    }
    for (int r = 0; r < pseudo.rows; ++r) {
      for (int c = 0; c < pseudo.cols; ++c) {
        const int gt = item.mask.at(r, c);
        if (gt == item.mask.ignore_value) continue;
        if (conf.at(r, c) < cfg.tau) continue;
        const bool ok = pseudo.at(r, c) == gt;
        conf_n += 1;
        conf_ok += ok;
        if (weights.at(r, c) >= 0.8) {
          w_n += 1;
          w_ok += ok;
        }
        const std::size_t i = static_cast<std::size_t>(r) * pseudo.cols + c;
        // agreement groups cover object classes only; background has no
        // detector and its reliable pixels come from labeled images
        if (boxes_per_unlabeled && pseudo.at(r, c) != 0) {
          if (cover[i]) {
            rel_n += 1;
            rel_ok += ok;
          } else {
            unb_n += 1;
            unb_ok += ok;
          }
        }
      }
    }
  }
  m.conf_count = conf_n;
  m.conf_incorrect = conf_n - conf_ok;
  m.weighted_count = w_n;
  m.reliable_count = rel_n;
  m.unboxed_count = unb_n;
  if (conf_n > 0) m.pl_acc_conf = static_cast<double>(conf_ok) / conf_n;
  if (w_n > 0) m.pl_acc_weighted = static_cast<double>(w_ok) / w_n;
  if (boxes_per_unlabeled) {
    if (rel_n > 0) m.reliable_acc = static_cast<double>(rel_ok) / rel_n;
    if (unb_n > 0) m.unboxed_acc = static_cast<double>(unb_ok) / unb_n;
  }
  return m;
}

inline void append_prototype_history(TrainState& state) {
  for (const auto& [class_id, proto] : state.bank.all_prototypes()) {
    state.prototype_history[class_id].push_back(proto.vector);
  }
}

}  // namespace detail

// Labeled-only reference loop: Eq. 1 supervision plus the EMA teacher trace.
// Kept as an independently written loop so the alpha=0 degeneracy of train()
// can be checked against it parameter-for-parameter.
inline TrainState train_supervised(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate();
  if (ds.labeled_idx.empty()) throw std::invalid_argument("no labeled images");
  const int num_classes = ds.spec.num_classes;

  TrainState state;
  state.student = SegModel(cfg.hidden_dim, num_classes,
                           derive_seed(cfg.train_seed, seed_tag::model_init));
  state.teacher = state.student;
  state.bank = PrototypeBank(cfg.bank_capacity, derive_seed(cfg.train_seed, seed_tag::bank));

  const int labeled_count = static_cast<int>(ds.labeled_idx.size());
  const int steps =
      (labeled_count + cfg.batch_labeled - 1) / cfg.batch_labeled;
  std::vector<double> grad(state.student.parameters().size());
  std::vector<int> order(ds.labeled_idx);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.train_seed, seed_tag::labeled_shuffle, epoch));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int step = 0; step < steps; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double step_loss = 0.0;
      for (int b = 0; b < cfg.batch_labeled; ++b) {
        const int idx = order[(step * cfg.batch_labeled + b) % labeled_count];
        const auto& item = ds.train[idx];
        const auto aug = weak_augment(
            item.image, derive_seed(cfg.train_seed, seed_tag::augment_labeled, epoch, step, b));
        const SegmentationMask gt = aug.hflip ? hflip_mask(item.mask) : item.mask;
        const long long count = detail::nonignore_count(gt);
        if (count == 0) continue;
        const Tensor2D ones(gt.rows, gt.cols, 1.0);
        step_loss += state.student.accumulate_weighted_ce(
            aug.image, gt, ones, 1.0 / (static_cast<double>(cfg.batch_labeled) * count),
            &grad);
      }
      state.student.apply_gradient(grad, cfg.lr);
      ema_update(state.teacher, state.student, cfg.ema_momentum);
      epoch_loss += step_loss;
    }
    state.epoch = epoch;
    state.history.push_back(
        detail::evaluate_epoch(cfg, ds, state, nullptr, epoch, epoch_loss / steps, 0.0));
  }
  return state;
}

// Teacher-student SSL loop: weak-view pseudo-labels from the EMA teacher,
// reliability-gated bank updates, rank-statistics pixel weights, and one SGD
// step per iteration on L_s + alpha * L_u. With alpha == 0 or no unlabeled
// images the unsupervised machinery is skipped structurally and the run
// degenerates to train_supervised.
inline TrainState train(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate();
  if (ds.labeled_idx.empty()) throw std::invalid_argument("no labeled images");
  const bool ssl = cfg.alpha > 0.0 && !ds.unlabeled_idx.empty();
  if (!ssl) return train_supervised(cfg, ds);

  const int num_classes = ds.spec.num_classes;
  TrainState state;
  state.student = SegModel(cfg.hidden_dim, num_classes,
                           derive_seed(cfg.train_seed, seed_tag::model_init));
  state.teacher = state.student;
  state.bank = PrototypeBank(cfg.bank_capacity, derive_seed(cfg.train_seed, seed_tag::bank));

  // Frozen detector, trained once on the labeled split; boxes for each
  // unlabeled image are detected on the clean image and cached, then
  // mirrored whenever the weak view flips.
  std::vector<std::vector<LabeledBox>> cached_boxes;
  const bool use_detector = cfg.use_rppi && cfg.use_ppw;
  if (use_detector) {
    std::vector<const Tensor2D*> images;
    std::vector<const SegmentationMask*> masks;
    for (int idx : ds.labeled_idx) {
      images.push_back(&ds.train[idx].image);
      masks.push_back(&ds.train[idx].mask);
    }
    const auto trainset = make_detection_trainset(images, masks, {0}, num_classes,
                                                  cfg.train_seed, cfg.det_neg_per_image,
                                                  cfg.det_scales);
    state.detector = train_region_classifier(trainset, num_classes, cfg.det_epochs,
                                             cfg.det_lr, cfg.train_seed);
    state.detector_trained = true;
    cached_boxes.reserve(ds.unlabeled_idx.size());
    for (int idx : ds.unlabeled_idx) {
      cached_boxes.push_back(detect(state.detector, ds.train[idx].image, cfg.det_scales,
                                    cfg.bbox_conf, cfg.det_nms_iou));
    }
  }

  const int labeled_count = static_cast<int>(ds.labeled_idx.size());
  const int unlabeled_count = static_cast<int>(ds.unlabeled_idx.size());
  const int steps = (unlabeled_count + cfg.batch_unlabeled - 1) / cfg.batch_unlabeled;
  const std::size_t param_count = state.student.parameters().size();
  std::vector<double> grad_sup(param_count), grad_unsup(param_count), combined(param_count);
  std::vector<int> labeled_order(ds.labeled_idx);
  std::vector<int> unlabeled_order(ds.unlabeled_idx);

  struct UnlabeledItem {
    int corpus_idx = 0;
    int cache_idx = 0;
    std::uint64_t aug_seed = 0;
    AugmentedImage weak;
    Tensor3D features;
    SegmentationMask pseudo;
    Tensor2D conf;
    std::vector<LabeledBox> boxes;
  };
  std::vector<UnlabeledItem> batch(cfg.batch_unlabeled);
  std::map<int, int> cache_index;
  for (int u = 0; u < unlabeled_count; ++u) cache_index[ds.unlabeled_idx[u]] = u;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng lshuffle(derive_seed(cfg.train_seed, seed_tag::labeled_shuffle, epoch));
    lshuffle.shuffle(labeled_order);
    Rng ushuffle(derive_seed(cfg.train_seed, seed_tag::unlabeled_shuffle, epoch));
    ushuffle.shuffle(unlabeled_order);
    double epoch_sup = 0.0, epoch_unsup = 0.0;

    for (int step = 0; step < steps; ++step) {
      std::fill(grad_sup.begin(), grad_sup.end(), 0.0);
      std::fill(grad_unsup.begin(), grad_unsup.end(), 0.0);
      double loss_sup = 0.0, loss_unsup = 0.0;

      // supervised half; feeds the bank from labeled pixels
      for (int b = 0; b < cfg.batch_labeled; ++b) {
        const int idx = labeled_order[(step * cfg.batch_labeled + b) % labeled_count];
        const auto& item = ds.train[idx];
        const auto aug = weak_augment(
            item.image, derive_seed(cfg.train_seed, seed_tag::augment_labeled, epoch, step, b));
        const SegmentationMask gt = aug.hflip ? hflip_mask(item.mask) : item.mask;
        const long long count = detail::nonignore_count(gt);
        if (count == 0) continue;
        const Tensor2D ones(gt.rows, gt.cols, 1.0);
        loss_sup += state.student.accumulate_weighted_ce(
            aug.image, gt, ones, 1.0 / (static_cast<double>(cfg.batch_labeled) * count),
            &grad_sup);
        if (cfg.use_ppw) {
          Tensor3D features;
          state.teacher.forward(aug.image, &features, nullptr);
          std::vector<std::pair<int, std::pair<int, int>>> pixels;
          for (int r = 0; r < gt.rows; ++r) {
            for (int c = 0; c < gt.cols; ++c) {
              if (gt.at(r, c) != gt.ignore_value) {
                pixels.push_back({gt.at(r, c), {r, c}});
              }
            }
          }
          detail::push_class_features(state.bank, features, pixels, cfg.per_image_limit);
        }
      }

      // pseudo-label pass: teacher on weak views, reliability-gated bank feed
      for (int b = 0; b < cfg.batch_unlabeled; ++b) {
        UnlabeledItem& it = batch[b];
        it.corpus_idx = unlabeled_order[(step * cfg.batch_unlabeled + b) % unlabeled_count];
        it.cache_idx = cache_index[it.corpus_idx];
        it.aug_seed =
            derive_seed(cfg.train_seed, seed_tag::augment_unlabeled, epoch, step, b);
        it.weak = weak_augment(ds.train[it.corpus_idx].image, it.aug_seed);
        Tensor3D logits;
        state.teacher.forward(it.weak.image, &it.features, &logits);
        state.teacher.predict_from_logits(logits, &it.pseudo, &it.conf);
        if (use_detector) {
          it.boxes = cached_boxes[it.cache_idx];
          if (it.weak.hflip) {
            for (auto& box : it.boxes) box.rect = hflip_rect(box.rect, it.pseudo.cols);
          }
          const ReliabilityMask reliable =
              reliable_pixels(it.pseudo, it.conf, it.boxes, cfg.tau);
          std::vector<std::pair<int, std::pair<int, int>>> pixels;
          for (int r = 0; r < it.pseudo.rows; ++r) {
            for (int c = 0; c < it.pseudo.cols; ++c) {
              if (reliable.at(r, c)) pixels.push_back({it.pseudo.at(r, c), {r, c}});
            }
          }
          detail::push_class_features(state.bank, it.features, pixels,
                                      cfg.per_image_limit_unlabeled);
        }
      }

      // weighting pass: prototypes after this step's bank updates
      const auto prototypes =
          cfg.use_ppw ? state.bank.all_prototypes() : std::map<int, ClassPrototype>{};
      for (int b = 0; b < cfg.batch_unlabeled; ++b) {
        UnlabeledItem& it = batch[b];
        Tensor2D weights =
            cfg.use_ppw
                ? compute_weight_map(it.features, it.pseudo, prototypes, cfg.k, cfg.similarity)
                : Tensor2D(it.pseudo.rows, it.pseudo.cols, 1.0);
        for (int r = 0; r < it.pseudo.rows; ++r) {
          for (int c = 0; c < it.pseudo.cols; ++c) {
            if (it.conf.at(r, c) < cfg.tau) weights.at(r, c) = 0.0;
          }
        }
        const auto strong = strong_augment(ds.train[it.corpus_idx].image, it.aug_seed);
        loss_unsup += state.student.accumulate_weighted_ce(
            strong.image, it.pseudo, weights,
            1.0 / (static_cast<double>(cfg.batch_unlabeled) * it.pseudo.rows * it.pseudo.cols),
            &grad_unsup);
      }

      for (std::size_t i = 0; i < param_count; ++i) {
        combined[i] = grad_sup[i] + cfg.alpha * grad_unsup[i];
      }
      state.student.apply_gradient(combined, cfg.lr);
      ema_update(state.teacher, state.student, cfg.ema_momentum);
      epoch_sup += loss_sup;
      epoch_unsup += loss_unsup;
    }

    state.epoch = epoch;
    if (cfg.use_ppw) detail::append_prototype_history(state);
    state.history.push_back(detail::evaluate_epoch(
        cfg, ds, state, use_detector ? &cached_boxes : nullptr, epoch, epoch_sup / steps,
        epoch_unsup / steps));
  }
  return state;
}

struct AblateRow {
  std::string axis;
  std::string value;
  std::string seed;  // seed number, or "mean"
  EpochMetrics metrics;
};

inline const char* ablate_csv_header() {
  return "axis,value,seed,miou,pl_acc_conf,pl_acc_weighted,reliable_acc,loss_sup,"
         "loss_unsup,loss_total";
}

inline std::string ablate_csv(const std::vector<AblateRow>& rows) {
  std::string out = ablate_csv_header();
  out += '\n';
  char buf[320];
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  row.axis.c_str(), row.value.c_str(), row.seed.c_str(), m.miou,
                  m.pl_acc_conf, m.pl_acc_weighted, m.reliable_acc, m.loss_sup,
                  m.loss_unsup, m.loss_total);
    out += buf;
  }
  return out;
}

inline TrainConfig apply_axis_value(TrainConfig cfg, const std::string& axis,
                                    const std::string& value) {
  if (axis == "k") {
    cfg.k = std::stoi(value);
  } else if (axis == "alpha") {
    cfg.alpha = std::stod(value);
  } else if (axis == "bbox_conf") {
    cfg.bbox_conf = std::stod(value);
  } else if (axis == "bank_capacity") {
    cfg.bank_capacity = std::stoi(value);
  } else if (axis == "similarity") {
    cfg.similarity = similarity_from_string(value);
  } else {
    throw std::invalid_argument(
        "unknown ablation axis '" + axis +
        "' (valid: k, alpha, bbox_conf, bank_capacity, similarity)");
  }
  return cfg;
}

// One train() per (value, seed) cell with otherwise identical config; cells
// may run on worker threads, and rows come back in deterministic
// value-major order with a trailing mean row per value.
inline std::vector<AblateRow> ablate(const TrainConfig& base, const Dataset& ds,
                                     const std::string& axis,
                                     const std::vector<std::string>& values,
                                     const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw std::invalid_argument("ablate: values list is empty");
  if (seeds.empty()) throw std::invalid_argument("ablate: seeds list is empty");
  struct Cell {
    TrainConfig cfg;
    int value_idx;
    int seed_idx;
  };
  std::vector<Cell> cells;
  for (int v = 0; v < static_cast<int>(values.size()); ++v) {
    TrainConfig cfg = apply_axis_value(base, axis, values[v]);
    cfg.validate();
    for (int s = 0; s < static_cast<int>(seeds.size()); ++s) {
      Cell cell{cfg, v, s};
      cell.cfg.train_seed = seeds[s];
      cells.push_back(std::move(cell));
    }
  }

  std::vector<EpochMetrics> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;
  const int workers =
      std::min<int>(detail::resolve_threads(base.threads), static_cast<int>(cells.size()));
  auto run_cells = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size() || failed.load()) break;
      try {
        TrainState st = train(cells[i].cfg, ds);
        results[i] = st.history.back();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failed.store(true);
        if (error_message.empty()) error_message = e.what();
      }
    }
  };
  if (workers <= 1) {
    run_cells();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_cells);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("ablate: " + error_message);

  std::vector<AblateRow> rows;
  for (int v = 0; v < static_cast<int>(values.size()); ++v) {
    EpochMetrics mean;
    mean.miou = mean.pl_acc_conf = mean.pl_acc_weighted = mean.reliable_acc = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].value_idx != v) continue;
      rows.push_back(AblateRow{axis, values[v],
                               std::to_string(seeds[cells[i].seed_idx]), results[i]});
      const auto& m = results[i];
      mean.miou += m.miou;
      mean.pl_acc_conf += m.pl_acc_conf;
      mean.pl_acc_weighted += m.pl_acc_weighted;
      mean.reliable_acc += m.reliable_acc;
      mean.loss_sup += m.loss_sup;
      mean.loss_unsup += m.loss_unsup;
      mean.loss_total += m.loss_total;
      n += 1;
    }
    mean.miou /= n;
    mean.pl_acc_conf /= n;
    mean.pl_acc_weighted /= n;
    mean.reliable_acc /= n;
    mean.loss_sup /= n;
    mean.loss_unsup /= n;
    mean.loss_total /= n;
    rows.push_back(AblateRow{axis, values[v], "mean", mean});
  }
  return rows;
}

}  // namespace pwseg
