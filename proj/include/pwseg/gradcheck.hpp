#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace pwseg {

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_index = -1;
  bool passed = false;
};

// Compares an analytic gradient against central finite differences.
// h scales with the parameter magnitude; the relative error denominator is
// guarded so near-zero gradient components do not blow up the ratio.
inline GradCheckReport grad_check(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> params, const std::vector<double>& analytic_grad,
    double rel_tol) {
  if (rel_tol <= 0.0) throw std::invalid_argument("grad_check: rel_tol must be > 0");
  if (analytic_grad.size() != params.size()) {
    throw std::invalid_argument("grad_check: gradient/parameter size mismatch");
  }
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    const double h = 1e-4 * std::max(1.0, std::abs(orig));
    params[i] = orig + h;
    const double fp = f(params);
    params[i] = orig - h;
    const double fm = f(params);
    params[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("grad_check: non-finite function value");
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double rel = std::abs(a - fd) / std::max(1e-6, std::abs(a) + std::abs(fd));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = static_cast<int>(i);
    }
  }
  report.passed = report.max_rel_error < rel_tol;
  return report;
}

}  // namespace pwseg
