#pragma once

// Test-only finite-difference oracle used to verify handwritten gradients.
// Central differences with h = 1e-5; the relative error uses a small floor
// so near-zero coordinates compare on an absolute scale.

#include <cmath>
#include <functional>

#include "macc/linalg.hpp"
#include "macc/nets.hpp"

namespace macc::testutil {

inline Vec finite_difference(const std::function<double(const Vec&)>& f, Vec at,
                             double h = 1e-5) {
  Vec grad(at.size(), 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    double keep = at[i];
    at[i] = keep + h;
    double hi = f(at);
    at[i] = keep - h;
    double lo = f(at);
    at[i] = keep;
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

/// Worst per-coordinate relative error between the analytic gradient and the
/// central-difference estimate.
inline double fd_relative_error(const std::function<double(const Vec&)>& f, const Vec& at,
                                const Vec& analytic, double h = 1e-5, double floor = 1e-5) {
  Vec fd = finite_difference(f, at, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    double denom = std::max({std::fabs(fd[i]), std::fabs(analytic[i]), floor});
    worst = std::max(worst, std::fabs(fd[i] - analytic[i]) / denom);
  }
  return worst;
}

/// True when any relu pre-activation sits within 1e-3 of its kink, where
/// central differences straddle the nondifferentiability.
inline bool near_relu_kink(const nets::DenseNet& net, const Vec& x) {
  nets::DenseNet::Cache cache;
  net.forward(x, &cache);
  for (const Vec& z : cache.preacts)
    for (double v : z)
      if (std::fabs(v) < 1e-3) return true;
  return false;
}

}  // namespace macc::testutil
