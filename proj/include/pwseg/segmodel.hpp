#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

// Patch inputs per pixel: 3x3 neighborhood (clamp-to-edge) + normalized
// row/col coordinates.
constexpr int kPatchInputs = 11;

// softplus keeps activations non-negative like ReLU but smooth, so central
// finite differences agree with the analytic gradient everywhere
inline double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// d softplus / dx recovered from the activation: sigmoid(x) = 1 - exp(-y)
inline double softplus_grad_from_output(double y) { return 1.0 - std::exp(-y); }

// Tiny per-pixel segmentation model: patch -> hidden softplus layer (the
// penultimate features queried against prototypes) -> class logits.
// Gradients are hand-derived; parameters live in one flat vector so EMA and
// checkpointing are elementwise.
class SegModel {
 public:
  SegModel() = default;

  SegModel(int hidden_dim, int num_classes, std::uint64_t seed)
      : hidden_dim_(hidden_dim), num_classes_(num_classes) {
    if (hidden_dim < 1 || num_classes < 2) {
      throw std::invalid_argument("SegModel: hidden_dim >= 1 and num_classes >= 2");
    }
    params_.resize(param_count(hidden_dim, num_classes));
    Rng rng(seed);
    for (double& p : params_) p = rng.uniform(-0.1, 0.1);
  }

  static std::size_t param_count(int hidden, int classes) {
    return static_cast<std::size_t>(hidden) * kPatchInputs + hidden +
           static_cast<std::size_t>(classes) * hidden + classes;
  }

  int hidden_dim() const { return hidden_dim_; }
  int num_classes() const { return num_classes_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  void set_parameters(const std::vector<double>& params) {
    if (params.size() != params_.size()) {
      throw std::invalid_argument("SegModel: parameter size mismatch");
    }
    params_ = params;
  }

  // 3x3 neighborhood (clamp-to-edge) and normalized coordinates, centered
  // around zero; centering keeps the first layer well conditioned.
  static std::array<double, kPatchInputs> patch_at(const Tensor2D& image, int r, int c) {
    std::array<double, kPatchInputs> x;
    int i = 0;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = std::clamp(r + dr, 0, image.rows - 1);
        const int cc = std::clamp(c + dc, 0, image.cols - 1);
        x[i++] = image.at(rr, cc) - 0.5;
      }
    }
    x[9] = image.rows > 1 ? static_cast<double>(r) / (image.rows - 1) - 0.5 : 0.0;
    x[10] = image.cols > 1 ? static_cast<double>(c) / (image.cols - 1) - 0.5 : 0.0;
    return x;
  }

  // hidden = relu(W1 x + b1); logits = W2 hidden + b2
  void forward_patch(const double* x, double* hidden, double* logits) const {
    const double* w1 = params_.data();
    const double* b1 = w1 + static_cast<std::size_t>(hidden_dim_) * kPatchInputs;
    const double* w2 = b1 + hidden_dim_;
    const double* b2 = w2 + static_cast<std::size_t>(num_classes_) * hidden_dim_;
    for (int h = 0; h < hidden_dim_; ++h) {
      const double* row = w1 + static_cast<std::size_t>(h) * kPatchInputs;
      double acc = b1[h];
      for (int i = 0; i < kPatchInputs; ++i) acc += row[i] * x[i];
      hidden[h] = softplus(acc);
    }
    for (int c = 0; c < num_classes_; ++c) {
      const double* row = w2 + static_cast<std::size_t>(c) * hidden_dim_;
      double acc = b2[c];
      for (int h = 0; h < hidden_dim_; ++h) acc += row[h] * hidden[h];
      logits[c] = acc;
    }
  }

  void forward(const Tensor2D& image, Tensor3D* features, Tensor3D* logits) const {
    if (image.rows < 1 || image.cols < 1) {
      throw std::invalid_argument("forward: empty image");
    }
    if (features) *features = Tensor3D(image.rows, image.cols, hidden_dim_);
    if (logits) *logits = Tensor3D(image.rows, image.cols, num_classes_);
    std::vector<double> hidden_buf(hidden_dim_), logit_buf(num_classes_);
    for (int r = 0; r < image.rows; ++r) {
      for (int c = 0; c < image.cols; ++c) {
        const auto x = patch_at(image, r, c);
        double* hidden = features ? features->pixel(r, c) : hidden_buf.data();
        double* logit = logits ? logits->pixel(r, c) : logit_buf.data();
        forward_patch(x.data(), hidden, logit);
      }
    }
  }

  FeatureVector features_at(const Tensor2D& image, int r, int c) const {
    FeatureVector hidden(hidden_dim_);
    std::vector<double> logits(num_classes_);
    const auto x = patch_at(image, r, c);
    forward_patch(x.data(), hidden.data(), logits.data());
    return hidden;
  }

  // Per-pixel argmax class (ties -> lowest id) and max softmax probability.
  void predict(const Tensor2D& image, SegmentationMask* labels, Tensor2D* conf) const {
    Tensor3D logits;
    forward(image, nullptr, &logits);
    predict_from_logits(logits, labels, conf);
  }

  void predict_from_logits(const Tensor3D& logits, SegmentationMask* labels,
                           Tensor2D* conf) const {
    if (labels) *labels = SegmentationMask(logits.rows, logits.cols, 0);
    if (conf) *conf = Tensor2D(logits.rows, logits.cols);
    std::vector<double> probs(num_classes_);
    for (int r = 0; r < logits.rows; ++r) {
      for (int c = 0; c < logits.cols; ++c) {
        const double* l = logits.pixel(r, c);
        int best = 0;
        for (int k = 1; k < num_classes_; ++k) {
          if (l[k] > l[best]) best = k;
        }
        if (labels) labels->at(r, c) = best;
        if (conf) {
          softmax_into(l, num_classes_, probs.data());
          conf->at(r, c) = probs[best];
        }
      }
    }
  }

  // Accumulates scale * sum_i w_i * ce_i over all pixels into *grad (when
  // non-null) and returns the same quantity as the loss contribution.
  // Pixels whose target equals the mask's ignore value or whose weight is 0
  // contribute nothing.
  double accumulate_weighted_ce(const Tensor2D& image, const SegmentationMask& targets,
                                const Tensor2D& weights, double scale,
                                std::vector<double>* grad) const {
    if (targets.rows != image.rows || targets.cols != image.cols ||
        weights.rows != image.rows || weights.cols != image.cols) {
      throw std::invalid_argument("accumulate_weighted_ce: dimension mismatch");
    }
    if (grad && grad->size() != params_.size()) {
      throw std::invalid_argument("accumulate_weighted_ce: gradient size mismatch");
    }
    double loss = 0.0;
    std::vector<double> hidden(hidden_dim_), logits(num_classes_), probs(num_classes_),
        dlogits(num_classes_), dhidden(hidden_dim_);
    const double* w1 = params_.data();
    const std::size_t w1_size = static_cast<std::size_t>(hidden_dim_) * kPatchInputs;
    const double* w2 = w1 + w1_size + hidden_dim_;
    double* g_w1 = nullptr;
    double* g_b1 = nullptr;
    double* g_w2 = nullptr;
    double* g_b2 = nullptr;
    if (grad) {
      g_w1 = grad->data();
      g_b1 = g_w1 + w1_size;
      g_w2 = g_b1 + hidden_dim_;
      g_b2 = g_w2 + static_cast<std::size_t>(num_classes_) * hidden_dim_;
    }
    for (int r = 0; r < image.rows; ++r) {
      for (int c = 0; c < image.cols; ++c) {
        const int target = targets.at(r, c);
        if (target == targets.ignore_value) continue;
        const double w = weights.at(r, c);
        if (w == 0.0) continue;
        if (target < 0 || target >= num_classes_) {
          throw std::invalid_argument("accumulate_weighted_ce: target out of range");
        }
        const auto x = patch_at(image, r, c);
        forward_patch(x.data(), hidden.data(), logits.data());
        softmax_into(logits.data(), num_classes_, probs.data());
        loss += scale * w * -std::log(std::max(probs[target], kLogClamp));
        if (!grad) continue;
        const double f = scale * w;
        for (int k = 0; k < num_classes_; ++k) {
          dlogits[k] = f * (probs[k] - (k == target ? 1.0 : 0.0));
        }
        for (int k = 0; k < num_classes_; ++k) {
          const double d = dlogits[k];
          double* g_row = g_w2 + static_cast<std::size_t>(k) * hidden_dim_;
          for (int h = 0; h < hidden_dim_; ++h) {
            g_row[h] += d * hidden[h];
          }
          g_b2[k] += d;
        }
        for (int h = 0; h < hidden_dim_; ++h) {
          double acc = 0.0;
          for (int k = 0; k < num_classes_; ++k) {
            acc += dlogits[k] * w2[static_cast<std::size_t>(k) * hidden_dim_ + h];
          }
          dhidden[h] = acc * softplus_grad_from_output(hidden[h]);
        }
        for (int h = 0; h < hidden_dim_; ++h) {
          const double d = dhidden[h];
          if (d == 0.0) continue;
          double* g_row = g_w1 + static_cast<std::size_t>(h) * kPatchInputs;
          for (int i = 0; i < kPatchInputs; ++i) g_row[i] += d * x[i];
          g_b1[h] += d;
        }
      }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss");
    return loss;
  }

  void apply_gradient(const std::vector<double>& grad, double lr) {
    if (grad.size() != params_.size()) {
      throw std::invalid_argument("apply_gradient: size mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grad[i];
  }

  struct PatchSample {
    std::array<double, kPatchInputs> patch;
    int target = 0;
    double weight = 1.0;
  };

  // Mean weighted cross-entropy over the batch plus its parameter gradient.
  double patch_loss_and_grad(const std::vector<PatchSample>& batch,
                             std::vector<double>* grad) const {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (grad) grad->assign(params_.size(), 0.0);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> hidden(hidden_dim_), logits(num_classes_), probs(num_classes_),
        dlogits(num_classes_);
    const double* w1 = params_.data();
    const std::size_t w1_size = static_cast<std::size_t>(hidden_dim_) * kPatchInputs;
    const double* w2 = w1 + w1_size + hidden_dim_;
    for (const auto& sample : batch) {
      if (sample.target < 0 || sample.target >= num_classes_) {
        throw std::invalid_argument("patch batch: target out of range");
      }
      if (sample.weight == 0.0) continue;
      forward_patch(sample.patch.data(), hidden.data(), logits.data());
      softmax_into(logits.data(), num_classes_, probs.data());
      loss += scale * sample.weight * -std::log(std::max(probs[sample.target], kLogClamp));
      if (!grad) continue;
      const double f = scale * sample.weight;
      double* g_w1 = grad->data();
      double* g_b1 = g_w1 + w1_size;
      double* g_w2 = g_b1 + hidden_dim_;
      double* g_b2 = g_w2 + static_cast<std::size_t>(num_classes_) * hidden_dim_;
      for (int k = 0; k < num_classes_; ++k) {
        dlogits[k] = f * (probs[k] - (k == sample.target ? 1.0 : 0.0));
        double* g_row = g_w2 + static_cast<std::size_t>(k) * hidden_dim_;
        for (int h = 0; h < hidden_dim_; ++h) g_row[h] += dlogits[k] * hidden[h];
        g_b2[k] += dlogits[k];
      }
      for (int h = 0; h < hidden_dim_; ++h) {
        double acc = 0.0;
        for (int k = 0; k < num_classes_; ++k) {
          acc += dlogits[k] * w2[static_cast<std::size_t>(k) * hidden_dim_ + h];
        }
        acc *= softplus_grad_from_output(hidden[h]);
        double* g_row = g_w1 + static_cast<std::size_t>(h) * kPatchInputs;
        for (int i = 0; i < kPatchInputs; ++i) g_row[i] += acc * sample.patch[i];
        g_b1[h] += acc;
      }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss");
    return loss;
  }

  // One SGD step on the mean weighted cross-entropy of the batch.
  double train_step(const std::vector<PatchSample>& batch, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("train_step: lr must be > 0");
    std::vector<double> grad;
    const double loss = patch_loss_and_grad(batch, &grad);
    apply_gradient(grad, lr);
    return loss;
  }

 private:
  int hidden_dim_ = 0;
  int num_classes_ = 0;
  std::vector<double> params_;
};

// theta_teacher <- m * theta_teacher + (1 - m) * theta_student
inline void ema_update(SegModel& teacher, const SegModel& student, double momentum) {
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("ema_update: momentum must be in [0, 1)");
  }
  auto& t = teacher.parameters();
  const auto& s = student.parameters();
  if (t.size() != s.size()) throw std::invalid_argument("ema_update: shape mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = momentum * t[i] + (1.0 - momentum) * s[i];
  }
}

}  // namespace pwseg
