#include <doctest.h>

#include <cmath>
#include <complex>

#include "ck/cgo.hpp"
#include "ck/scenario.hpp"
#include "fixtures.hpp"

using namespace ck;
using Cd = std::complex<double>;

namespace {

// Euclidean plane in cylindrical coordinates (x1, r, theta): g = diag(1, 1, r^2).
AdmissibleMetric flat_am(double r0 = 0.15, double r1 = 0.75) {
  AdmissibleMetric am;
  am.c = ScalarField{3, kr(1.0)};
  am.g0 = ckt::flat_disc();
  am.omega = VecN<double>(2);
  am.chart = Chart::box(3, {-1.0, r0, 0.0}, {1.0, r1, 2.0 * std::acos(-1.0)});
  am.polar_m = coord(1) * coord(1);
  return am;
}

}  // namespace

TEST_CASE("product structure of the assembled metric") {
  auto am = flat_am();
  auto G = assemble(am);
  CHECK(G.m_dev < 1e-8);
  CHECK(G.dm_dev < 1e-5);
  CHECK(G.cross_dev < 1e-8);

  // diag(1, 1, r^2) exactly, sampled mid-chart.
  VecN<double> x{0.2, 0.45, 1.3};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = (i != j) ? 0.0 : (i < 2 ? 1.0 : x[1] * x[1]);
      CHECK(std::abs(eval_value(G.metric.at(i, j), x) - want) < 1e-14);
    }

  double rmin = min_radius(am);
  CHECK(rmin > 0.05);
  CHECK(rmin < 0.2);
}

TEST_CASE("phase solves the eikonal equation") {
  auto am = flat_am();
  auto G = assemble(am);
  CHECK(eikonal_residual(am, G) < 1e-12);

  // Any other radial profile for the imaginary part fails badly.
  Expr bad = 2.0 * coord(1);
  CHECK(eikonal_residual(am, G, 8, &bad) > 2.99);
}

TEST_CASE("amplitude transport along the complexified direction") {
  auto am = flat_am();
  auto G = assemble(am);

  // Holomorphic data rides for free; the r^{-1/2} factor carries the geometry.
  CgoAmplitude amp{a0_one(), kr(1.0), {}};
  auto ar = amplitude_expr(am, G, amp);
  VecN<double> x{0.1, 0.36, 2.0};
  CHECK(std::abs(eval_value(ar, x) - std::pow(x[1], -0.5)) < 1e-14);

  auto tr0 = transport_residual(am, G, amp);
  CHECK(tr0.residual < 1e-8);
  CHECK(tr0.a0_dbar < 1e-14);

  auto tre = transport_residual(am, G, CgoAmplitude{a0_exp(1.3), kr(1.0), {}});
  CHECK(tre.residual < 1e-7 * tre.scale);

  auto trp = transport_residual(am, G, CgoAmplitude{a0_power(3), 1.0 + 0.3 * cos(coord(2)), {}});
  CHECK(trp.residual < 1e-7 * trp.scale);

  // Anti-holomorphic a0 violates the transport equation.
  CgoAmplitude bad{coord(0) - kc({0.0, 1.0}) * coord(1), kr(1.0), {}};
  auto trb = transport_residual(am, G, bad);
  CHECK(trb.residual > 0.1 * trb.scale);
  CHECK(trb.a0_dbar > 0.9);
}

TEST_CASE("conformal factor and curved cross-section") {
  // Nontrivial conformal factor over the flat cross-section.
  auto am = flat_am();
  am.c = ScalarField{3, 1.0 + 0.2 * sin(1.1 * coord(0) + 0.3) + 0.15 * cos(2.0 * coord(1)) +
                            0.1 * cos(coord(2))};
  auto G = assemble(am);
  CHECK(eikonal_residual(am, G) < 1e-12);
  auto tr = transport_residual(am, G, CgoAmplitude{a0_exp(0.7), 1.0 + 0.2 * sin(coord(2)), {}});
  CHECK(tr.residual < 1e-5 * tr.scale);

  // det g = c^3 m for the warped block structure.
  VecN<double> x{0.15, 0.4, 0.9};
  double cval = eval_value(am.c.f, x).real();
  double mval = eval_value(G.m, x).real();
  MatN<double> gx(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gx(i, j) = eval_value(G.metric.at(i, j), x).real();
  CHECK(std::abs(det(gx) - cval * cval * cval * mval) / std::abs(det(gx)) < 1e-10);

  // Curved transversal factor, off-center pole.
  AdmissibleMetric amc;
  amc.c = ScalarField{3, kr(1.0)};
  amc.g0 = ckt::curved_disc();
  amc.omega = VecN<double>{0.1, -0.05};
  amc.chart = Chart::box(3, {-1.0, 0.15, 0.0}, {1.0, 0.6, 2.0 * std::acos(-1.0)});
  auto Gc = assemble(amc);
  CHECK(Gc.m_dev < 1e-6);
  CHECK(Gc.dm_dev < 1e-5);
  CHECK(Gc.cross_dev < 1e-6);
  CHECK(Gc.radial_dev < 1e-8);
  CHECK(eikonal_residual(amc, Gc) < 1e-12);
  auto trc = transport_residual(amc, Gc, CgoAmplitude{a0_exp(0.9), kr(1.0), {}});
  CHECK(trc.residual < 1e-5 * trc.scale);
}

TEST_CASE("constant curvature cross-section matches sinh profile") {
  AdmissibleMetric am;
  am.c = ScalarField{3, kr(1.0)};
  am.g0 = make_manifold("poincare-disc");
  am.omega = VecN<double>(2);
  am.chart = Chart::box(3, {-1.0, 0.2, 0.0}, {1.0, 1.4, 2.0 * std::acos(-1.0)});
  auto G = assemble(am);
  double worst = 0.0;
  for (int i = 0; i <= 20; ++i) {
    double r = 0.2 + 1.2 * i / 20.0;
    VecN<double> x{0.0, r, 0.7};
    double want = std::sinh(r) * std::sinh(r);
    worst = std::max(worst, std::abs(eval_value(G.m, x) - want) / want);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("magnetic phase correction") {
  auto am = flat_am(0.15, 0.75);
  auto G = assemble(am);

  OneFormField zero = OneFormField::zero(3);
  auto mz = magnetic_phase(am, zero, 1e-3, 128);
  CHECK(mz.residual < 1e-12);

  // A = -2 dx1: dbar phi = 1, so phi = z up to holomorphic freedom.
  OneFormField ac = OneFormField::zero(3);
  ac.comp[0] = kr(-2.0);
  auto mc = magnetic_phase(am, ac, 1e-3, 256);
  CHECK(mc.residual < 1e-4);
  VecN<double> x{0.1, 0.45, 0.3};
  auto jx = scalar_jets<double>(mc.phi, x);
  Cd dx1(jx.d[0].re, jx.d[0].im), dr(jx.d[1].re, jx.d[1].im);
  Cd dbar = 0.5 * (dx1 + Cd(0.0, 1.0) * dr);
  CHECK(std::abs(dbar - Cd(1.0, 0.0)) < 1e-4);

  // Bump potential: residual drops under grid refinement and the corrected
  // amplitude satisfies transport to the same accuracy.
  OneFormField ab = OneFormField::zero(3);
  ab.comp[0] = 0.5 * exp(0.0 - ((coord(0) - 0.1) * (coord(0) - 0.1) +
                                (coord(1) - 0.45) * (coord(1) - 0.45)) /
                                   0.04);
  ab.comp[1] = 0.3 * exp(0.0 - ((coord(0) + 0.2) * (coord(0) + 0.2) +
                                (coord(1) - 0.40) * (coord(1) - 0.40)) /
                                   0.05);
  auto mb1 = magnetic_phase(am, ab, 1.0, 128);
  auto mb2 = magnetic_phase(am, ab, 1.0, 256);
  CHECK(mb2.residual < 1e-3);
  CHECK(mb2.residual < 0.6 * mb1.residual);

  CgoAmplitude ampm{a0_one(), kr(1.0), mb2.phi};
  auto trm = transport_residual(am, G, ampm, &ab, 8, &mb2.window);
  CHECK(trm.residual <= 2.0 * mb2.residual * trm.scale + 1e-10);
}

TEST_CASE("residual decay in the asymptotic parameter") {
  auto am = flat_am();
  auto G = assemble(am);
  ScalarField q{3, 0.4 + 0.25 * sin(1.3 * coord(0)) * cos(coord(2))};
  CgoAmplitude amp{a0_exp(0.9), 1.0 + 0.3 * cos(coord(2)), {}};
  std::vector<double> hs{0.1, 0.05, 0.025, 0.0125};
  auto scan = residual_scan(am, G, q, amp, hs);
  CHECK(scan.slope > 1.95);
  CHECK(scan.slope < 2.05);
  CHECK(std::abs(scan.ratio_spread - 1.0) < 1e-8);

  // A wrong phase stalls the decay: the h^2 term never forms.
  Expr bad = 2.0 * coord(1);
  auto scan_bad = residual_scan(am, G, q, amp, hs, 8, &bad);
  CHECK(std::abs(scan_bad.slope) <= 0.1);
  CHECK(scan_bad.eikonal > 1.0);
}
