#include <doctest.h>

#include <cmath>

#include "ck/transport.hpp"
#include "fixtures.hpp"

using namespace ck;
using ckt::flat_disc;
using ckt::v2;

static const double kPi = std::acos(-1.0);

TEST_CASE("flat disc chords") {
  auto M = flat_disc();

  // Diameter: tau = 2, exit at the antipode.
  auto p = integrate_geodesic(M, v2(1.0, 0.0), v2(-1.0, 0.0));
  CHECK(p.tau == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(p.samples.back().x[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::abs(p.samples.back().x[1]) < 1e-9);

  // Entry at angle alpha from the inward normal: chord length 2 cos(alpha).
  double alpha = 0.5;
  auto p2 = integrate_geodesic(M, v2(1.0, 0.0), v2(-std::cos(alpha), std::sin(alpha)));
  CHECK(p2.tau == doctest::Approx(2.0 * std::cos(alpha)).epsilon(1e-9));

  // Running the exit state backwards reproduces the travel time.
  auto& last = p2.samples.back();
  auto p3 = integrate_geodesic(M, last.x, v2(-last.v[0], -last.v[1]));
  CHECK(std::abs(p3.tau - p2.tau) < 1e-7);
}

TEST_CASE("unit speed is preserved on a curved disc") {
  auto C = ckt::curved_disc();
  VecN<double> xc = v2(1.0, 0.0);
  VecN<double> vc = v2(-1.0 / std::sqrt(1.4), 0.0);  // g00(1,0) = 1.4
  auto pc = integrate_geodesic(C, xc, vc);
  double worst = 0.0;
  for (auto& s : pc.samples) {
    auto mj = metric_jets(C.metric, s.x);
    worst = std::max(worst, std::abs(std::sqrt(form(mj.g, s.v, s.v)) - 1.0));
  }
  CHECK(worst < 1e-8);

  // Halving the step moves tau by less than the integrator tolerance.
  auto pf = integrate_geodesic(C, xc, vc, 0.5 * default_step(C));
  CHECK(std::abs(pc.tau - pf.tau) < 1e-7);
}

TEST_CASE("boundary geometry of discs and ellipses") {
  auto M = flat_disc();
  CHECK(boundary_convexity(M, 32) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(boundary_length(M) == doctest::Approx(2.0 * kPi).epsilon(1e-7));

  SimpleManifold E = flat_disc();
  E.metric.chart = Chart::box(2, -2.5, 2.5);
  E.boundary_fn =
      ScalarField{2, 0.5 * (1.0 - coord(0) * coord(0) / 4.0 - coord(1) * coord(1))};
  // Semi-axes (2, 1): minimum curvature b/a^2 = 1/4 at the flat ends.
  CHECK(boundary_convexity(E, 64) == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("index form on flat chords") {
  auto M = flat_disc();
  ScalarField zero{2, kr(0.0)};
  auto diam = integrate_geodesic(M, v2(1.0, 0.0), v2(-1.0, 0.0));
  CHECK(conjugate_point_scan(M, diam) == std::nullopt);

  // First Dirichlet eigenvalue of -u'' on (0, L): (pi/L)^2.
  auto rep = index_min_eig(M, diam, zero, 400);
  double want = kPi * kPi / 4.0;
  CHECK(std::abs(rep.lambda1 - want) / want < 1e-4);

  // Constant attenuation shifts the spectrum by exactly a^2.
  ScalarField mu{2, kr(0.3)};
  auto rep2 = index_min_eig(M, diam, mu, 400);
  CHECK(rep.lambda1 - rep2.lambda1 == doctest::Approx(0.09).epsilon(1e-7));
}

TEST_CASE("polar normal chart on the flat disc") {
  auto M = flat_disc();
  PolarNormal pn(M, VecN<double>(2));
  auto pt = pn.point(0.7, 1.1);
  CHECK(pt[0] == doctest::Approx(0.7 * std::cos(1.1)).epsilon(1e-9));
  CHECK(pt[1] == doctest::Approx(0.7 * std::sin(1.1)).epsilon(1e-9));
  CHECK(pn.m(0.7, 1.1) == doctest::Approx(0.49).epsilon(1e-7));
  CHECK(std::abs(pn.cross_term(0.7, 1.1)) < 1e-7);

  auto [r, th] = pn.forward(v2(-0.3, 0.55));
  CHECK(r == doctest::Approx(std::hypot(0.3, 0.55)).epsilon(1e-9));
  CHECK(th == doctest::Approx(std::atan2(0.55, -0.3)).epsilon(1e-9));
}

TEST_CASE("flat disc certifies simple") {
  auto diag = certify_simple(flat_disc(), 32, 8, 5);
  CHECK(diag.convex);
  CHECK(diag.no_conjugate_points);
  CHECK(diag.polar_charts_ok);
  CHECK(diag.simple);
  CHECK(diag.min_boundary_curvature == doctest::Approx(1.0).epsilon(1e-4));
}
