// tolerance.hpp - the one comparison policy used across the toolkit.

#pragma once

#include <algorithm>
#include <cmath>

namespace ck {

// Every numeric check is |computed - expected| <= tau_abs + tau_rel * scale,
// where scale is the largest magnitude among the compared terms. Exact
// structural facts (dimensions, symmetry of storage) are asserted, not
// toleranced.
struct Tolerance {
  double abs = 1e-9;
  double rel = 1e-6;

  double bound(double scale) const { return abs + rel * std::abs(scale); }
  bool ok(double err, double scale) const { return std::abs(err) <= bound(scale); }
};

inline double scale_of(std::initializer_list<double> terms) {
  double s = 0.0;
  for (double t : terms) s = std::max(s, std::abs(t));
  return s;
}

}  // namespace ck
