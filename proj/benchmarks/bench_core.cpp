// Microbenchmarks for the hot paths: bracket evaluation, geodesic tracing,
// ray integrals, curvature reports, and the boundary symbol recursion.

#include <benchmark/benchmark.h>

#include "ck/boundary.hpp"
#include "ck/carleman.hpp"
#include "ck/geometry.hpp"
#include "ck/scenario.hpp"
#include "ck/transport.hpp"
#include "ck/xray.hpp"

namespace {

using namespace ck;

ChartMetric curved3() {
  ChartMetric m = ChartMetric::euclidean(3);
  m.set(0, 0, 1.0 + 0.3 * coord(1) * coord(1));
  m.set(0, 1, 0.1 * coord(2));
  m.set(1, 1, exp(0.2 * coord(0)));
  m.set(1, 2, 0.05 * coord(0) * coord(1));
  m.set(2, 2, kr(2.0));
  return m;
}

ScalarField log_weight() {
  return {3, 0.5 * log(coord(0) * coord(0) + coord(1) * coord(1) + coord(2) * coord(2))};
}

void bm_bracket(benchmark::State& state, BracketMethod method) {
  ChartMetric m = curved3();
  ScalarField phi = log_weight();
  CotangentSample s;
  s.x = VecN<double>{0.6, -0.4, 0.8};
  s.xi = VecN<double>{0.3, 1.1, -0.2};
  for (auto _ : state) benchmark::DoNotOptimize(bracket(m, phi, s, method));
}

void bm_bracket_formula(benchmark::State& state) { bm_bracket(state, BracketMethod::Formula); }
void bm_bracket_direct(benchmark::State& state) { bm_bracket(state, BracketMethod::Direct); }

void bm_curvature(benchmark::State& state) {
  ChartMetric m = curved3();
  VecN<double> x{0.3, -0.2, 0.4};
  for (auto _ : state) benchmark::DoNotOptimize(curvature(m, x));
}

void bm_geodesic(benchmark::State& state) {
  SimpleManifold M = make_manifold("conformal-disc");
  VecN<double> x0{-0.9, 0.1};
  VecN<double> v0{1.0, 0.25};
  for (auto _ : state) benchmark::DoNotOptimize(integrate_geodesic(M, x0, v0));
}

void bm_forward_ray(benchmark::State& state) {
  SimpleManifold M = make_manifold("flat-disc");
  ScalarField a{2, kr(-0.2)};
  ScalarField f{2, exp(-4.0 * (coord(0) * coord(0) + coord(1) * coord(1)))};
  auto fan = fan_rays(M, 4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(forward(M, a, f, nullptr, fan));
}

void bm_symbol_recursion(benchmark::State& state) {
  BoundaryCoefficients bc = curved_block_coefficients();
  for (auto _ : state) benchmark::DoNotOptimize(symbol_b(bc, -1));
}

void bm_symbol_eval(benchmark::State& state) {
  BoundaryCoefficients bc = curved_block_coefficients();
  SymbolFunction b = symbol_b(bc, -1);
  VecN<double> x{0.1, -0.2, 0.0};
  VecN<double> xi{0.7, -0.4};
  for (auto _ : state) benchmark::DoNotOptimize(b.eval(x, xi));
}

BENCHMARK(bm_bracket_formula);
BENCHMARK(bm_bracket_direct);
BENCHMARK(bm_curvature);
BENCHMARK(bm_geodesic);
BENCHMARK(bm_forward_ray);
BENCHMARK(bm_symbol_recursion)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_symbol_eval);

}  // namespace

BENCHMARK_MAIN();
