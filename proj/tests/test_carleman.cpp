#include <doctest.h>

#include <cmath>

#include "ck/carleman.hpp"
#include "ck/rng.hpp"
#include "fixtures.hpp"

using namespace ck;
using ckt::v3;

namespace {

ChartMetric curved3() {
  ChartMetric m;
  m.chart = Chart::box(3, -2.0, 2.0);
  m.set(0, 0, 1.0 + 0.3 * coord(1) * coord(1));
  m.set(0, 1, 0.1 * coord(2));
  m.set(0, 2, kr(0.0));
  m.set(1, 1, exp(0.2 * coord(0)));
  m.set(1, 2, 0.05 * coord(0) * coord(1));
  m.set(2, 2, kr(2.0));
  return m;
}

}  // namespace

TEST_CASE("log weight bracket vanishes in both evaluation modes") {
  ChartMetric e3 = ChartMetric::euclidean(3);
  WeightSpec ws;
  ws.family = WeightFamily::Log;
  ws.x0 = VecN<double>(3);
  auto w = euclidean_weight(ws);
  CotangentSample s;
  s.x = v3(1.0, 0.0, 0.0);
  s.xi = v3(0.0, 1.0, 0.0);
  CHECK(std::abs(bracket(e3, w.phi, s, BracketMethod::Formula)) < 1e-12);
  CHECK(std::abs(bracket(e3, w.phi, s, BracketMethod::Direct)) < 1e-12);
}

TEST_CASE("closed bracket formula agrees with the Hamiltonian bracket") {
  // Random cotangent samples on a curved metric, characteristic or not.
  ChartMetric m = curved3();
  ScalarField f{3, coord(0) + coord(1) * coord(1) + 0.3 * sin(coord(2))};
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    CotangentSample t;
    t.x = VecN<double>(3);
    t.xi = VecN<double>(3);
    for (int j = 0; j < 3; ++j) {
      t.x[j] = rng.uniform(-1.0, 1.0);
      t.xi[j] = rng.normal();
    }
    double a = bracket(m, f, t, BracketMethod::Formula);
    double b = bracket(m, f, t, BracketMethod::Direct);
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("characteristic samples sit on the zero set of the symbol") {
  ChartMetric m = curved3();
  ScalarField f{3, coord(0) + coord(1) * coord(1) + 0.3 * sin(coord(2))};
  double worst = 0.0;
  for (auto& cs : characteristic_samples(m, f, v3(0.7, -0.4, 0.2), 16))
    worst = std::max(worst, std::abs(symbol_p(m, f, cs)));
  CHECK(worst < 1e-10);
}

TEST_CASE("catalog families verify on their domains") {
  ChartMetric e3 = ChartMetric::euclidean(3);
  Rng prng(123);
  for (int fam = 0; fam < 6; ++fam) {
    WeightSpec sp;
    sp.family = static_cast<WeightFamily>(fam);
    sp.a = 1.7;
    sp.b = -0.3;
    sp.x0 = VecN<double>(3);
    sp.xi = v3(1.1, -0.4, 0.25);
    sp.omega1 = v3(1.0, 0.0, 0.0);
    sp.omega2 = v3(0.0, 1.0, 0.0);
    sp.theta = 0.9;
    auto w = euclidean_weight(sp);
    std::vector<VecN<double>> pts;
    while (static_cast<int>(pts.size()) < 25) {
      VecN<double> p(3);
      for (int j = 0; j < 3; ++j) p[j] = prng.uniform(-2.0, 2.0);
      if (w.domain(p)) pts.push_back(p);
    }
    auto rep = lcw_report(e3, w.phi, pts, 16);
    INFO("family ", to_string(sp.family));
    CHECK(rep.max_bracket < 1e-6);
    CHECK(rep.is_lcw);
  }
}

TEST_CASE("a non-example is rejected") {
  ChartMetric e3 = ChartMetric::euclidean(3);
  ScalarField bad{3, coord(0) + coord(1) * coord(1)};
  std::vector<VecN<double>> pts{v3(0.0, 1.0, 0.0)};
  auto rep = lcw_report(e3, bad, pts, 16);
  CHECK(rep.max_bracket > 0.1);
  CHECK_FALSE(rep.is_lcw);
}

TEST_CASE("argument weights evaluate to the expected angles") {
  WeightSpec ap;
  ap.family = WeightFamily::ArgPlane;
  ap.x0 = VecN<double>(3);
  ap.omega1 = v3(1.0, 0.0, 0.0);
  ap.omega2 = v3(0.0, 1.0, 0.0);
  auto wap = euclidean_weight(ap);
  CHECK(eval_value(wap.phi.f, v3(0.0, 1.0, 0.0)).real() ==
        doctest::Approx(std::asin(1.0)).epsilon(1e-12));  // pi/2

  WeightSpec lr;
  lr.family = WeightFamily::LogRatio;
  lr.x0 = VecN<double>(3);
  lr.xi = v3(1.0, 0.0, 0.0);
  auto wlr = euclidean_weight(lr);
  // |3 e1 + e1|^2 / |3 e1 - e1|^2 = 16/4.
  CHECK(eval_value(wlr.phi.f, v3(3.0, 0.0, 0.0)).real() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("convexified weights satisfy the perturbed bracket identity") {
  ChartMetric e3 = ChartMetric::euclidean(3);
  ScalarField lin{3, coord(0)};
  Rng rng(5);
  std::vector<CotangentSample> samples;
  for (int i = 0; i < 25; ++i) {
    CotangentSample t;
    t.x = VecN<double>(3);
    t.xi = VecN<double>(3);
    for (int j = 0; j < 3; ++j) {
      t.x[j] = rng.uniform(-0.8, 0.8);
      t.xi[j] = rng.normal();
    }
    samples.push_back(t);
  }
  CHECK(convexified_bracket_check(e3, lin, 0.5, 0.2, samples) < 1e-9);
}
