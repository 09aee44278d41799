#include <doctest.h>

#include <cmath>

#include "ck/geometry.hpp"
#include "fixtures.hpp"

using namespace ck;
using ckt::v3;

TEST_CASE("polar metric Christoffel symbols") {
  ChartMetric polar;
  polar.chart = Chart::box(2, 0.1, 10.0);
  polar.set(0, 0, kr(1.0));
  polar.set(0, 1, kr(0.0));
  polar.set(1, 1, coord(0) * coord(0));
  VecN<double> p(2);
  p[0] = 2.0;
  p[1] = 0.7;
  auto ch = christoffel(metric_jets(polar, p));
  // Gamma^r_tt = -r, Gamma^t_rt = 1/r.
  CHECK(ch.G[0](1, 1) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(ch.G[1](0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("log-distance weight Hessian in three dimensions") {
  ChartMetric eu = ChartMetric::euclidean(3);
  Expr r2 = coord(0) * coord(0) + coord(1) * coord(1) + coord(2) * coord(2);
  ScalarField logw{3, 0.5 * log(r2)};

  for (double rho : {0.5, 1.0, 2.0}) {
    VecN<double> x = v3(rho, 0.0, 0.0);
    auto hr = grad_hessian(eu, logw, x);
    const double lam = 1.0 / (rho * rho);
    // Eigenvalues (-1/rho^2, 1/rho^2, 1/rho^2), ascending.
    CHECK(std::abs(hr.eigenvalues[0] + lam) < 1e-10);
    CHECK(std::abs(hr.eigenvalues[1] - lam) < 1e-10);
    CHECK(std::abs(hr.eigenvalues[2] - lam) < 1e-10);
    CHECK(hr.lambda == doctest::Approx(lam).epsilon(1e-10));
    CHECK(hr.mu == doctest::Approx(1.0 / rho).epsilon(1e-10));
    // Laplacian equals (n - 2) lambda with n = 3.
    auto lb = laplace_beltrami(eu, logw, x);
    CHECK(std::abs(lb - std::complex<double>(lam, 0.0)) < 1e-10);
  }

  // Rotated base point: same spectrum.
  VecN<double> y = v3(0.6, -0.8, 1.2);
  double rho2 = 0.36 + 0.64 + 1.44;
  auto hr = grad_hessian(eu, logw, y);
  CHECK(hr.eigenvalues[0] == doctest::Approx(-1.0 / rho2).epsilon(1e-10));
  CHECK(hr.eigenvalues[2] == doctest::Approx(1.0 / rho2).epsilon(1e-10));
}

TEST_CASE("warped product e^{2 x1} (dx1^2 + dx2^2 + dx3^2)") {
  ChartMetric prod;
  prod.chart = Chart::box(3, -3.0, 3.0);
  Expr w = exp(2.0 * coord(0));
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) prod.set(i, j, i == j ? w : kr(0.0));
  auto cr = curvature(prod, v3(0.3, -0.2, 0.9));
  // Mixed curvature entries with two x1 slots vanish for this warped form.
  double worst = 0.0;
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(cr.riemann[0][b][c][0]));
  CHECK(worst < 1e-10);
  // Conformally flat in three dimensions: Cotton tensor vanishes.
  CHECK(cr.cotton_norm < 1e-6 * std::max(1.0, cr.riemann_norm));
}

TEST_CASE("curvature tensor symmetries on a generic metric") {
  ChartMetric m;
  m.chart = Chart::box(3, -2.0, 2.0);
  m.set(0, 0, 1.0 + 0.3 * coord(1) * coord(1));
  m.set(0, 1, 0.1 * sin(coord(2)));
  m.set(0, 2, kr(0.0));
  m.set(1, 1, exp(0.2 * coord(0)));
  m.set(1, 2, 0.05 * coord(0) * coord(1));
  m.set(2, 2, kr(2.0));
  auto cr = curvature(m, v3(0.4, -0.3, 0.8));
  double scale = std::max(cr.riemann_norm, 1e-12);
  double dev = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double r = cr.riemann[i][j][k][l];
          dev = std::max(dev, std::abs(r + cr.riemann[j][i][k][l]));
          dev = std::max(dev, std::abs(r + cr.riemann[i][j][l][k]));
          dev = std::max(dev, std::abs(r - cr.riemann[k][l][i][j]));
          dev = std::max(dev, std::abs(r + cr.riemann[i][k][l][j] + cr.riemann[i][l][j][k]));
        }
  CHECK(dev / scale < 1e-10);
}

TEST_CASE("unit circle principal curvature") {
  ChartMetric e2 = ChartMetric::euclidean(2);
  SurfacePatch circle;
  circle.dim_ambient = 2;
  circle.dim_param = 1;
  circle.map[0] = cos(coord(0));
  circle.map[1] = sin(coord(0));
  VecN<double> u(1);
  u[0] = 0.6;
  VecN<double> ref = ckt::v2(std::cos(0.6) * 2.0, std::sin(0.6) * 2.0);
  auto sf = second_fundamental_form(e2, circle, u, ref);
  CHECK(sf.principal[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("vector field classification on the flat plane") {
  ChartMetric e2 = ChartMetric::euclidean(2);
  std::vector<VecN<double>> pts;
  for (double a = 0.3; a < 1.5; a += 0.37)
    pts.push_back(ckt::v2(std::cos(a) * (1.0 + 0.3 * a), std::sin(a) * (1.0 + 0.3 * a)));

  OneFormField rot;
  rot.dim = 2;
  rot.comp[0] = -coord(1);
  rot.comp[1] = coord(0);
  auto fr = field_classify(e2, rot, pts);
  CHECK(fr.cls == FieldClass::Killing);
  CHECK(fr.killing_dev < 1e-10);
  CHECK(fr.parallel_dev > 0.1);  // rotation is not parallel

  OneFormField dil;
  dil.dim = 2;
  dil.comp[0] = coord(0);
  dil.comp[1] = coord(1);
  auto fd = field_classify(e2, dil, pts);
  CHECK(fd.cls == FieldClass::ConformalKilling);
  CHECK(fd.lambda_samples[0] == doctest::Approx(2.0).epsilon(1e-10));

  OneFormField par;
  par.dim = 2;
  par.comp[0] = kr(1.0);
  par.comp[1] = kr(0.5);
  CHECK(field_classify(e2, par, pts).cls == FieldClass::Parallel);

  // grad log|x| flattened: conformal Killing away from the origin.
  Expr q2 = coord(0) * coord(0) + coord(1) * coord(1);
  OneFormField cf;
  cf.dim = 2;
  cf.comp[0] = coord(0) / q2;
  cf.comp[1] = coord(1) / q2;
  auto fc = field_classify(e2, cf, pts);
  CHECK(fc.cls == FieldClass::ConformalKilling);
  CHECK(fc.conformal_dev < 1e-9);
}
