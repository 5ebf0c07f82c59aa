#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pwseg/gradcheck.hpp"
#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

using namespace pwseg;

namespace {

// extended-precision reference softmax
FeatureVector softmax_oracle(const FeatureVector& logits) {
  long double max_v = logits[0];
  for (double v : logits) max_v = std::max<long double>(max_v, v);
  long double sum = 0.0L;
  std::vector<long double> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(logits[i]) - max_v);
    sum += e[i];
  }
  FeatureVector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<double>(e[i] / sum);
  }
  return out;
}

}  // namespace

TEST_CASE("softmax basics") {
  const auto sym = softmax({0.0, 0.0});
  CHECK(sym[0] == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(sym[1] == Catch::Approx(0.5).epsilon(1e-12));

  const auto stable = softmax({1000.0, 0.0});
  CHECK(all_finite(stable));
  CHECK(stable[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(stable[1] >= 0.0);
  CHECK(stable[1] < 1e-300);

  const auto probs = softmax({1.0, 2.0, 3.0});
  const auto expected = softmax_oracle({1.0, 2.0, 3.0});
  for (int i = 0; i < 3; ++i) CHECK(probs[i] == Catch::Approx(expected[i]).epsilon(1e-14));

  CHECK_THROWS_WITH(softmax({}), "empty logits");
}

TEST_CASE("softmax properties over random vectors") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = rng.uniform_int(1, 12);
    FeatureVector v(dim);
    for (double& x : v) x = rng.uniform(-50.0, 50.0);
    const auto probs = softmax(v);
    double sum = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    // shift invariance
    const double shift = rng.uniform(-100.0, 100.0);
    FeatureVector shifted(v);
    for (double& x : shifted) x += shift;
    const auto probs_shifted = softmax(shifted);
    for (int i = 0; i < dim; ++i) {
      CHECK(std::abs(probs[i] - probs_shifted[i]) < 1e-9);
    }
  }
}

TEST_CASE("cross_entropy values and errors") {
  CHECK(cross_entropy({1.0, 0.0}, 0) == 0.0);
  CHECK(cross_entropy({0.5, 0.5}, 1) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = rng.uniform_int(2, 8);
    FeatureVector logits(dim);
    for (double& x : logits) x = rng.uniform(-5.0, 5.0);
    const auto probs = softmax(logits);
    const int target = rng.uniform_int(dim);
    CHECK(cross_entropy(probs, target) ==
          Catch::Approx(-std::log(probs[target])).epsilon(1e-12));
    CHECK(cross_entropy(probs, target) >= 0.0);
  }

  CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, -1), std::invalid_argument);

  // clamp keeps degenerate probabilities finite
  CHECK(std::isfinite(cross_entropy({1.0, 0.0}, 1)));
  CHECK(cross_entropy({1.0, 0.0}, 1) == Catch::Approx(-std::log(1e-12)));
}

TEST_CASE("grad_check on closed-form cases") {
  // f(w) = w^2, analytic df/dw = 2w
  const auto square = [](const std::vector<double>& w) { return w[0] * w[0]; };
  const auto report = grad_check(square, {3.0}, {6.0}, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-6);

  const auto wrong = grad_check(square, {3.0}, {5.0}, 1e-6);
  CHECK_FALSE(wrong.passed);
}

TEST_CASE("grad_check cross_entropy of softmax") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = rng.uniform_int(2, 10);
    std::vector<double> logits(dim);
    for (double& x : logits) x = rng.uniform(-3.0, 3.0);
    const int target = rng.uniform_int(dim);
    const auto f = [target](const std::vector<double>& l) {
      return cross_entropy(softmax(FeatureVector(l.begin(), l.end())), target);
    };
    // d/dl_j of -log softmax(l)_t = p_j - [j == t]
    const auto probs = softmax(FeatureVector(logits.begin(), logits.end()));
    std::vector<double> analytic(dim);
    for (int j = 0; j < dim; ++j) analytic[j] = probs[j] - (j == target ? 1.0 : 0.0);
    const auto report = grad_check(f, logits, analytic, 1e-4);
    CHECK(report.passed);
  }
}

TEST_CASE("grad_check rejects non-finite function values") {
  const auto bad = [](const std::vector<double>&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(grad_check(bad, {1.0}, {0.0}, 1e-4), std::runtime_error);
}
