#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>

#include "ck/xray.hpp"
#include "fixtures.hpp"

using namespace ck;
using ckt::flat_disc;
using ckt::v2;
using Cd = std::complex<double>;

static const double kPi = std::acos(-1.0);

TEST_CASE("forward transform closed forms on the flat disc") {
  auto M = flat_disc();
  auto fan = fan_rays(M, 8, 6);
  ScalarField one{2, kr(1.0)}, zero{2, kr(0.0)};

  // f = 1, a = 0: the ray integral is the chord length 2 cos(alpha).
  auto m1 = forward(M, zero, one, nullptr, fan);
  for (size_t i = 0; i < fan.size(); ++i)
    CHECK(std::abs(m1.entries[i].value.real() - 2.0 * std::cos(fan[i].alpha)) < 1e-8);

  // Constant attenuation mu: I = (e^{mu tau} - 1) / mu.
  double mu = 0.3;
  auto m2 = forward(M, ScalarField{2, kr(mu)}, one, nullptr, fan);
  for (size_t i = 0; i < fan.size(); ++i) {
    double tau = 2.0 * std::cos(fan[i].alpha);
    CHECK(std::abs(m2.entries[i].value.real() - (std::exp(mu * tau) - 1.0) / mu) < 1e-8);
  }

  // Purely imaginary attenuation: same closed form over C.
  auto m3 = forward(M, ScalarField{2, kc({0.0, 0.2})}, one, nullptr, fan);
  for (size_t i = 0; i < fan.size(); ++i) {
    double tau = 2.0 * std::cos(fan[i].alpha);
    Cd imu(0.0, 0.2);
    CHECK(std::abs(m3.entries[i].value - (std::exp(imu * tau) - 1.0) / imu) < 1e-8);
  }
}

TEST_CASE("attenuated kernel elements integrate to zero") {
  auto M = flat_disc();
  ScalarField a{2, kr(0.1)};
  ScalarField p{2, 1.0 - coord(0) * coord(0) - coord(1) * coord(1)};
  auto fan = fan_rays(M, 12, 8);
  auto kp = kernel_probe(M, a, p, fan);
  CHECK(kp.boundary_vanishes);
  CHECK(kp.max_abs < 1e-7);
  // p = 0 is trivially in the kernel.
  CHECK(kernel_probe(M, a, ScalarField{2, kr(0.0)}, fan).max_abs < 1e-13);
}

TEST_CASE("energy identity holds pointwise") {
  auto M = flat_disc();
  auto C = ckt::curved_disc();
  VecN<double> xp = v2(0.3, -0.2);

  SphereBundleFunction u1{sin(coord(2)) * exp(coord(0))};
  CHECK(pestov_residual(M, u1, xp, 0.7) < 1e-9);

  SphereBundleFunction u2{coord(0) * coord(0) + coord(1)};
  CHECK(pestov_residual(C, u2, xp, 1.1) < 1e-9);

  SphereBundleFunction u3{sin(coord(2)) * (coord(0) + 0.3 * coord(1) * coord(1)) +
                          0.4 * cos(2.0 * coord(2) + 1.0) * coord(1) + 0.2 * exp(coord(0))};
  for (double zt : {0.3, 1.2, 2.8, -2.0}) CHECK(pestov_residual(C, u3, xp, zt) < 1e-9);
  CHECK(pestov_residual(C, u3, v2(-0.5, 0.35), 2.1) < 1e-9);

  // The scale output picks up the size of the largest term.
  double scale = 0.0;
  pestov_residual(C, u3, xp, 0.9, 0.0, &scale);
  CHECK(scale > 0.1);

  // Finite-difference jets converge at second order.
  double ra = pestov_residual(C, u3, xp, 0.9, 2e-2);
  double rb = pestov_residual(C, u3, xp, 0.9, 1e-2);
  double rc = pestov_residual(C, u3, xp, 0.9, 5e-3);
  CHECK(std::log2(ra / rb) > 1.9);
  CHECK(std::log2(rb / rc) > 1.9);
}

TEST_CASE("sphere bundle volume identity") {
  auto M = flat_disc();
  SphereBundleFunction vone{kr(1.0)};
  auto sr = santalo_residual(M, vone, 64, 32);
  double tgt = 2.0 * kPi * kPi;
  CHECK(std::abs(sr.lhs - tgt) / tgt < 1e-3);
  CHECK(std::abs(sr.rhs - tgt) / tgt < 1e-3);

  // x-dependent integrand: lhs = 2 pi * integral = 2 pi^2 (1 - 1/e).
  SphereBundleFunction vf{exp(0.0 - coord(0) * coord(0) - coord(1) * coord(1))};
  auto sr2 = santalo_residual(M, vf, 64, 32);
  double tgt2 = 2.0 * kPi * kPi * (1.0 - std::exp(-1.0));
  CHECK(std::abs(sr2.lhs - tgt2) / tgt2 < 1e-3);
  CHECK(sr2.residual / tgt2 < 1e-3);

  auto sr3 = santalo_residual(ckt::curved_disc(), vone, 64, 32, true);
  CHECK(sr3.converged);
  CHECK(sr3.residual / std::abs(sr3.lhs) < 1e-3);
}

TEST_CASE("attenuated transform inverts a gaussian") {
  auto M = flat_disc();
  ScalarField f{2, exp(-4.0 * (coord(0) * coord(0) + coord(1) * coord(1)))};
  ScalarField a{2, kr(-0.2)};
  auto fan = fan_rays(M, 32, 32);
  auto grid = GridSpec::over_chart(M.metric.chart, 16, 16);
  auto sys = build_system(M, a, fan, grid, Unknowns::Function);
  auto inv = invert(sys, forward(M, a, f, nullptr, fan));
  CHECK(inv.converged);

  double num = 0.0, den = 0.0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      VecN<double> x = v2(grid.x0 + ix * (grid.x1 - grid.x0) / (grid.nx - 1),
                          grid.y0 + iy * (grid.y1 - grid.y0) / (grid.ny - 1));
      if (x[0] * x[0] + x[1] * x[1] > 0.81) continue;
      double want = std::exp(-4.0 * (x[0] * x[0] + x[1] * x[1]));
      double got = grid_eval(grid, inv.coeffs, x).real();
      num += (got - want) * (got - want);
      den += want * want;
    }
  // Coarse 16x16 grid; the acceptance configuration at 32x32 does better.
  CHECK(std::sqrt(num / den) < 0.1);
}

TEST_CASE("system matrix cache") {
  auto M = flat_disc();
  ScalarField a{2, kr(-0.2)};
  auto fan = fan_rays(M, 10, 8);
  auto grid = GridSpec::over_chart(M.metric.chart, 6, 6);
  auto sys = build_system(M, a, fan, grid, Unknowns::Function);
  const char* path = "cache_test.xrtm";

  save_system(path, sys);
  auto back = load_system_matrix(path);
  CHECK(back.rows() == sys.matrix.rows());
  CHECK(back.cols() == sys.matrix.cols());
  CHECK((back - sys.matrix).cwiseAbs().maxCoeff() == 0.0);

  // Real attenuation: entries are real, stored 8 bytes each.
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  auto size = static_cast<long long>(in.tellg());
  CHECK(size == 16 + 8LL * sys.matrix.rows() * sys.matrix.cols());
  in.close();

  // Corrupted magic is rejected.
  {
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.put('Y');
  }
  CHECK_THROWS(load_system_matrix(path));
  std::remove(path);
}
