// Shared test fixtures: the discs every module exercises, plus small vector
// helpers for literals.
#pragma once

#include "ck/transport.hpp"

namespace ckt {

inline ck::VecN<double> v2(double a, double b) {
  ck::VecN<double> x(2);
  x[0] = a;
  x[1] = b;
  return x;
}

inline ck::VecN<double> v3(double a, double b, double c) {
  ck::VecN<double> x(3);
  x[0] = a;
  x[1] = b;
  x[2] = c;
  return x;
}

inline ck::SimpleManifold flat_disc() {
  using namespace ck;
  SimpleManifold M;
  M.metric = ChartMetric::euclidean(2);
  M.metric.chart = Chart::box(2, -1.5, 1.5);
  M.boundary_fn = ScalarField{2, 0.5 * (1.0 - coord(0) * coord(0) - coord(1) * coord(1))};
  M.center = VecN<double>(2);
  return M;
}

// Conformal factor 1 + 0.4 (x^2 + y^2/2): mildly curved, still simple.
inline ck::SimpleManifold curved_disc() {
  using namespace ck;
  SimpleManifold M = flat_disc();
  Expr c = 1.0 + 0.4 * (coord(0) * coord(0) + 0.5 * coord(1) * coord(1));
  M.metric.set(0, 0, c);
  M.metric.set(0, 1, kr(0.0));
  M.metric.set(1, 1, c);
  return M;
}

}  // namespace ckt
