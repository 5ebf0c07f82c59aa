#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pwseg/gradcheck.hpp"
#include "pwseg/rng.hpp"
#include "pwseg/segmodel.hpp"

using namespace pwseg;

namespace {

Tensor2D random_image(Rng& rng, int rows, int cols) {
  Tensor2D image(rows, cols);
  for (double& v : image.data) v = rng.uniform();
  return image;
}

// straightforward re-implementation of the forward pass for oracle checks
void forward_oracle(const std::vector<double>& params, int hidden_dim, int num_classes,
                    const std::array<double, kPatchInputs>& x, std::vector<double>& hidden,
                    std::vector<double>& logits) {
  hidden.assign(hidden_dim, 0.0);
  logits.assign(num_classes, 0.0);
  std::size_t p = 0;
  for (int h = 0; h < hidden_dim; ++h) {
    double acc = 0.0;
    for (int i = 0; i < kPatchInputs; ++i) acc += params[p + h * kPatchInputs + i] * x[i];
    hidden[h] = acc;
  }
  p += static_cast<std::size_t>(hidden_dim) * kPatchInputs;
  for (int h = 0; h < hidden_dim; ++h) {
    hidden[h] = std::log1p(std::exp(hidden[h] + params[p + h]));
  }
  p += hidden_dim;
  for (int c = 0; c < num_classes; ++c) {
    double acc = 0.0;
    for (int h = 0; h < hidden_dim; ++h) acc += params[p + c * hidden_dim + h] * hidden[h];
    logits[c] = acc;
  }
  p += static_cast<std::size_t>(num_classes) * hidden_dim;
  for (int c = 0; c < num_classes; ++c) logits[c] += params[p + c];
}

}  // namespace

TEST_CASE("zero weights give uniform predictions") {
  SegModel model(8, 4, 1);
  std::fill(model.parameters().begin(), model.parameters().end(), 0.0);
  Rng rng(2);
  const auto image = random_image(rng, 6, 6);
  Tensor3D features, logits;
  model.forward(image, &features, &logits);
  for (double v : logits.data) CHECK(v == 0.0);

  SegmentationMask labels;
  Tensor2D conf;
  model.predict(image, &labels, &conf);
  for (int label : labels.labels) CHECK(label == 0);  // tie -> class 0
  for (double v : conf.data) CHECK(v == Catch::Approx(0.25));
}

TEST_CASE("outputs are a function of the local patch only") {
  SegModel model(8, 3, 3);
  Rng rng(4);
  auto image_a = random_image(rng, 8, 8);
  auto image_b = image_a;
  image_b.at(7, 7) = 1.0 - image_b.at(7, 7);  // far away change

  Tensor3D features_a, logits_a, features_b, logits_b;
  model.forward(image_a, &features_a, &logits_a);
  model.forward(image_b, &features_b, &logits_b);
  // pixel (2,2) is outside the 3x3 neighborhood of (7,7): identical outputs
  for (int ch = 0; ch < 8; ++ch) {
    CHECK(features_a.at(2, 2, ch) == features_b.at(2, 2, ch));
  }
  for (int c = 0; c < 3; ++c) CHECK(logits_a.at(2, 2, c) == logits_b.at(2, 2, c));
  // pixel (6,6) is adjacent: the change must propagate
  bool changed = false;
  for (int c = 0; c < 3; ++c) changed |= logits_a.at(6, 6, c) != logits_b.at(6, 6, c);
  CHECK(changed);
}

TEST_CASE("forward matches an independent re-implementation") {
  Rng rng(5);
  SegModel model(6, 4, 7);
  const auto image = random_image(rng, 5, 9);
  Tensor3D features, logits;
  model.forward(image, &features, &logits);
  std::vector<double> hidden_oracle, logits_oracle;
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      forward_oracle(model.parameters(), 6, 4, SegModel::patch_at(image, r, c),
                     hidden_oracle, logits_oracle);
      for (int h = 0; h < 6; ++h) {
        CHECK(std::abs(features.at(r, c, h) - hidden_oracle[h]) < 1e-12);
        CHECK(features.at(r, c, h) >= 0.0);  // post-ReLU
      }
      for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(logits.at(r, c, k) - logits_oracle[k]) < 1e-12);
      }
    }
  }
}

TEST_CASE("predict matches a brute-force scan") {
  Rng rng(6);
  SegModel model(8, 5, 11);
  const auto image = random_image(rng, 7, 7);
  Tensor3D logits;
  model.forward(image, nullptr, &logits);
  SegmentationMask labels;
  Tensor2D conf;
  model.predict(image, &labels, &conf);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) {
      int best = 0;
      for (int k = 1; k < 5; ++k) {
        if (logits.at(r, c, k) > logits.at(r, c, best)) best = k;
      }
      CHECK(labels.at(r, c) == best);
      const auto probs = softmax(logits.pixel_vector(r, c));
      CHECK(conf.at(r, c) == Catch::Approx(probs[best]).epsilon(1e-12));
      CHECK(conf.at(r, c) >= 1.0 / 5 - 1e-12);
      CHECK(conf.at(r, c) <= 1.0);
    }
  }
}

TEST_CASE("zero-weight batch leaves parameters unchanged with zero loss") {
  SegModel model(8, 3, 13);
  const auto before = model.parameters();
  Rng rng(14);
  std::vector<SegModel::PatchSample> batch(10);
  for (auto& s : batch) {
    for (double& x : s.patch) x = rng.uniform();
    s.target = rng.uniform_int(3);
    s.weight = 0.0;
  }
  const double loss = model.train_step(batch, 0.5);
  CHECK(loss == 0.0);
  CHECK(model.parameters() == before);
}

TEST_CASE("scaling all weights by a power of two scales the gradient exactly") {
  SegModel model(8, 3, 17);
  Rng rng(18);
  std::vector<SegModel::PatchSample> batch(12);
  for (auto& s : batch) {
    for (double& x : s.patch) x = rng.uniform();
    s.target = rng.uniform_int(3);
    s.weight = rng.uniform(0.1, 1.0);
  }
  std::vector<double> grad1;
  model.patch_loss_and_grad(batch, &grad1);
  for (auto& s : batch) s.weight *= 2.0;
  std::vector<double> grad2;
  model.patch_loss_and_grad(batch, &grad2);
  for (std::size_t i = 0; i < grad1.size(); ++i) CHECK(grad2[i] == 2.0 * grad1[i]);
}

TEST_CASE("analytic gradient passes finite differences on random batches") {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    SegModel model(5, 3, 100 + trial);
    std::vector<SegModel::PatchSample> batch(6);
    for (auto& s : batch) {
      for (double& x : s.patch) x = rng.uniform(-1.0, 1.0);
      s.target = rng.uniform_int(3);
      s.weight = rng.uniform(0.0, 1.0);
    }
    std::vector<double> analytic;
    model.patch_loss_and_grad(batch, &analytic);
    SegModel probe = model;
    const auto f = [&probe, &batch](const std::vector<double>& params) {
      probe.set_parameters(params);
      return probe.patch_loss_and_grad(batch, nullptr);
    };
    const auto report = grad_check(f, model.parameters(), analytic, 1e-4);
    INFO("max rel error " << report.max_rel_error);
    CHECK(report.passed);
  }
}

TEST_CASE("image-level weighted CE gradient passes finite differences") {
  Rng rng(23);
  SegModel model(4, 3, 41);
  const auto image = random_image(rng, 4, 4);
  SegmentationMask targets(4, 4, 0);
  Tensor2D weights(4, 4);
  for (int& t : targets.labels) t = rng.uniform_int(3);
  for (double& w : weights.data) w = rng.uniform();
  targets.at(1, 1) = targets.ignore_value;

  std::vector<double> analytic(model.parameters().size(), 0.0);
  model.accumulate_weighted_ce(image, targets, weights, 1.0 / 16, &analytic);
  SegModel probe = model;
  const auto f = [&](const std::vector<double>& params) {
    probe.set_parameters(params);
    return probe.accumulate_weighted_ce(image, targets, weights, 1.0 / 16, nullptr);
  };
  const auto report = grad_check(f, model.parameters(), analytic, 1e-4);
  CHECK(report.passed);
}

TEST_CASE("weighted loss with unit weights equals the unweighted mean CE") {
  Rng rng(29);
  SegModel model(6, 4, 43);
  const auto image = random_image(rng, 5, 5);
  SegmentationMask targets(5, 5, 0);
  for (int& t : targets.labels) t = rng.uniform_int(4);
  const Tensor2D ones(5, 5, 1.0);
  const double weighted =
      model.accumulate_weighted_ce(image, targets, ones, 1.0 / 25, nullptr);

  Tensor3D logits;
  model.forward(image, nullptr, &logits);
  double plain = 0.0;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      plain += cross_entropy(softmax(logits.pixel_vector(r, c)), targets.at(r, c));
    }
  }
  plain /= 25;
  CHECK(weighted == Catch::Approx(plain).epsilon(1e-12));
}

TEST_CASE("deterministic initialization and ema_update") {
  SegModel a(8, 3, 55), b(8, 3, 55);
  CHECK(a.parameters() == b.parameters());
  SegModel c(8, 3, 56);
  CHECK(a.parameters() != c.parameters());

  // m = 0 copies the student
  SegModel teacher(8, 3, 57);
  ema_update(teacher, a, 0.0);
  CHECK(teacher.parameters() == a.parameters());

  // applied twice with the student fixed: error contracts by m each step
  SegModel t2(8, 3, 58);
  const double m = 0.75;
  const double d0 = t2.parameters()[0] - a.parameters()[0];
  ema_update(t2, a, m);
  const double d1 = t2.parameters()[0] - a.parameters()[0];
  CHECK(d1 == Catch::Approx(m * d0).epsilon(1e-12));
  ema_update(t2, a, m);
  const double d2 = t2.parameters()[0] - a.parameters()[0];
  CHECK(d2 == Catch::Approx(m * m * d0).epsilon(1e-12));

  // elementwise oracle on random parameters
  Rng rng(59);
  SegModel teacher3(4, 3, 60), student3(4, 3, 61);
  const auto t_before = teacher3.parameters();
  const auto& s = student3.parameters();
  ema_update(teacher3, student3, 0.9);
  for (std::size_t i = 0; i < t_before.size(); ++i) {
    CHECK(teacher3.parameters()[i] == Catch::Approx(0.9 * t_before[i] + 0.1 * s[i]));
  }

  SegModel small(4, 3, 62);
  CHECK_THROWS_AS(ema_update(teacher, small, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(ema_update(teacher, a, 1.0), std::invalid_argument);
}
