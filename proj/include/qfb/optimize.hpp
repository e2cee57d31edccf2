#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>

#include "qfb/core.hpp"

namespace qfb {

struct ScalarOptimum {
  double x = 0.0;
  double value = 0.0;
  bool at_boundary = false;  ///< maximizer sits on an end of the search interval
};

/// Maximizes f on [lo, hi]: a uniform scan of `scan_points` nodes picks the
/// bracket, golden-section search narrows it to width `tol`. Ties resolve
/// to the leftmost candidate.
template <std::invocable<double> F>
ScalarOptimum maximize_scalar(F&& f, double lo, double hi, int scan_points = 200, double tol = 1e-9) {
  detail::require(lo < hi, "maximize_scalar: empty interval");
  detail::require(scan_points >= 3, "maximize_scalar: need at least 3 scan points");

  const double step = (hi - lo) / (scan_points - 1);
  int best = 0;
  double best_val = -INFINITY;
  for (int i = 0; i < scan_points; ++i) {
    const double v = f(lo + step * i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }

  double a = lo + step * std::max(best - 1, 0);
  double b = lo + step * std::min(best + 1, scan_points - 1);
  constexpr double kInvPhi = 0.6180339887498949;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }

  ScalarOptimum out;
  out.x = 0.5 * (a + b);
  out.value = f(out.x);
  const double x_scan = lo + step * best;
  if (best_val > out.value) {
    out.x = x_scan;
    out.value = best_val;
  }
  const double edge_tol = std::max(10.0 * tol, 1e-12 * (hi - lo));
  out.at_boundary = (out.x - lo) <= edge_tol || (hi - out.x) <= edge_tol;
  return out;
}

}  // namespace qfb
