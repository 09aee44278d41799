// Acceptance gate: one line per advertised guarantee, run at the documented
// settings and tolerances. Exits nonzero if any line fails. Scenario-driven
// guarantees go through run_scenario so the CLI contract is exercised too;
// pointwise guarantees call the library directly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ck/boundary.hpp"
#include "ck/carleman.hpp"
#include "ck/cgo.hpp"
#include "ck/geometry.hpp"
#include "ck/scenario.hpp"
#include "ck/transport.hpp"
#include "ck/xray.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace ck;
using Cd = std::complex<double>;

namespace {

const double kPi = std::acos(-1.0);

fs::path g_scratch;

struct Gate {
  int total = 0;
  int failures = 0;

  void line(bool pass, const char* name, const std::string& detail) {
    ++total;
    if (!pass) ++failures;
    std::printf("[%2d] %s  %-34s %s\n", total, pass ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
  }
};

struct ScenarioRun {
  RunResult result;
  double seconds = 0.0;
  Json report;  // the "report" object, empty on parse failures
};

ScenarioRun run_text(const std::string& name, const std::string& text) {
  fs::path dir = g_scratch / name;
  fs::create_directories(dir);
  fs::path sp = dir / "scenario.json";
  {
    std::ofstream out(sp);
    out << text;
  }
  auto t0 = std::chrono::steady_clock::now();
  ScenarioRun run;
  run.result = run_scenario(sp.string(), RunOptions{(dir / "out").string(), 0, 1.0});
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!run.result.report_json.empty())
    run.report = Json::parse(run.result.report_json)["report"];
  return run;
}

std::string status_note(const ScenarioRun& r) {
  if (r.result.status == 0) return "";
  if (!r.result.diagnostic.empty()) return " [" + r.result.diagnostic + "]";
  if (r.report.contains("error")) return " [" + r.report["error"].get<std::string>() + "]";
  std::string worst;
  if (r.report.contains("checks"))
    for (const auto& row : r.report["checks"])
      if (!row["pass"].get<bool>()) worst += " [" + row["name"].get<std::string>() + " failed]";
  return worst.empty() ? " [status " + std::to_string(r.result.status) + "]" : worst;
}

double max_check_value(const Json& report) {
  double worst = 0.0;
  if (report.contains("checks"))
    for (const auto& row : report["checks"])
      if (row.contains("value")) worst = std::max(worst, std::abs(row["value"].get<double>()));
  return worst;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// --------------------------------------------------------------------------
// 1. Catalog sweep: six families, twenty draws each, fifty points, sixteen
//    characteristic directions, normalized bracket below 1e-6, under 30 s.
// --------------------------------------------------------------------------
void catalog_sweep(Gate& gate) {
  auto run = run_text("catalog", R"({
    "version": 1, "command": "catalog-verify", "seed": 20260819,
    "parameters": {"draws": 20, "points": 50, "directions": 16, "dim": 3,
                   "tolerance": 1e-6}
  })");
  bool pass = run.result.status == 0 && run.seconds <= 30.0;
  gate.line(pass, "catalog bracket sweep",
            fmt("6 families x 20 x 50 x 16, max %.2e <= 1e-6, %.1f s <= 30 s%s",
                max_check_value(run.report), run.seconds, status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 2. Bracket evaluations agree between the closed Hessian formula and direct
//    Hamiltonian differentiation on 1000 random draws, characteristic or not.
// --------------------------------------------------------------------------
void bracket_agreement(Gate& gate) {
  Rng rng(911);
  double worst = 0.0;
  int done = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    Rng r = rng.derive("draw/" + std::to_string(draw));

    ChartMetric m = ChartMetric::euclidean(3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        double amp = (i == j) ? 0.15 : 0.08;
        Expr wave = r.uniform(-amp, amp) *
                    sin(r.uniform(-1.5, 1.5) * coord(0) + r.uniform(-1.5, 1.5) * coord(1) +
                        r.uniform(-1.5, 1.5) * coord(2) + r.uniform(0.0, 6.28));
        Expr base = (i == j) ? kr(1.0 + r.uniform(0.0, 0.5)) : kr(0.0);
        m.set(i, j, base + wave);
      }

    Expr phi_e = kr(r.uniform(-1.0, 1.0));
    for (int i = 0; i < 3; ++i) {
      phi_e = phi_e + r.uniform(-1.0, 1.0) * coord(i);
      for (int j = i; j < 3; ++j)
        phi_e = phi_e + r.uniform(-0.5, 0.5) * coord(i) * coord(j);
    }
    phi_e = phi_e + r.uniform(-0.8, 0.8) * sin(r.uniform(-1.5, 1.5) * coord(0) +
                                               r.uniform(-1.5, 1.5) * coord(1) +
                                               r.uniform(0.0, 6.28));
    ScalarField phi{3, phi_e};

    CotangentSample s;
    s.x = VecN<double>(3);
    for (int i = 0; i < 3; ++i) s.x[i] = r.uniform(-0.6, 0.6);

    bool characteristic = (draw % 4 == 0) && grad_hessian(m, phi, s.x).grad_norm > 1e-3;
    if (characteristic) {
      s = characteristic_samples(m, phi, s.x, 1).front();
    } else {
      s.xi = VecN<double>(3);
      double sc = r.uniform(0.3, 2.0);
      for (int i = 0; i < 3; ++i) s.xi[i] = sc * r.normal();
    }

    double bf = bracket(m, phi, s, BracketMethod::Formula);
    double bd = bracket(m, phi, s, BracketMethod::Direct);
    double scale = std::max({1.0, std::abs(bf), std::abs(bd)});
    worst = std::max(worst, std::abs(bf - bd) / scale);
    ++done;
  }
  gate.line(worst <= 1e-6 && done == 1000, "bracket formula vs direct",
            fmt("1000 draws, worst scaled gap %.2e <= 1e-6", worst));
}

// --------------------------------------------------------------------------
// 3. Radial log weight in R^3: Hessian spectrum (-1/rho^2, 1/rho^2, 1/rho^2),
//    level-set principal curvatures equal to mu, and Laplacian = (n-2) lambda.
// --------------------------------------------------------------------------
void log_weight_structure(Gate& gate) {
  ChartMetric m = ChartMetric::euclidean(3);
  ScalarField phi{3, 0.5 * log(coord(0) * coord(0) + coord(1) * coord(1) + coord(2) * coord(2))};

  double worst_eig = 0.0, worst_prin = 0.0, worst_lap = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    // A point at radius rho off the coordinate axes.
    VecN<double> x{rho * 0.48, rho * -0.6, rho * 0.64142135623730951};
    double rn = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    for (int i = 0; i < 3; ++i) x[i] *= rho / rn;

    auto h = grad_hessian(m, phi, x);
    double want[3] = {-1.0 / (rho * rho), 1.0 / (rho * rho), 1.0 / (rho * rho)};
    for (int i = 0; i < 3; ++i)
      worst_eig = std::max(worst_eig, std::abs(h.eigenvalues[i] - want[i]));

    // Level set |x| = rho as a parametrized sphere patch, outward reference.
    SurfacePatch patch;
    patch.dim_ambient = 3;
    patch.dim_param = 2;
    patch.map[0] = rho * cos(coord(0)) * sin(coord(1));
    patch.map[1] = rho * sin(coord(0)) * sin(coord(1));
    patch.map[2] = rho * cos(coord(1));
    VecN<double> u{0.7, 1.1};
    VecN<double> ref{std::cos(0.7) * std::sin(1.1), std::sin(0.7) * std::sin(1.1), std::cos(1.1)};
    auto sf = second_fundamental_form(m, patch, u, ref);
    for (int i = 0; i < 2; ++i)
      worst_prin = std::max(worst_prin, std::abs(sf.principal[i] - h.mu));

    double lap = laplace_beltrami(m, phi, x).real();
    worst_lap = std::max(worst_lap, std::abs(lap - 1.0 * h.lambda));
  }
  bool pass = worst_eig <= 1e-8 && worst_prin <= 1e-6 && worst_lap <= 1e-5;
  gate.line(pass, "log weight Hessian structure",
            fmt("eig gap %.1e <= 1e-8, curvature gap %.1e <= 1e-6, Laplacian gap %.1e <= 1e-5",
                worst_eig, worst_prin, worst_lap));
}

// --------------------------------------------------------------------------
// 4. Energy identity residual under 1e-5 of the identity scale across 200
//    random bundle functions, flat and curved, with refinement order >= 1.9.
// --------------------------------------------------------------------------
void energy_identity(Gate& gate) {
  auto flat = run_text("pestov-flat", R"({
    "version": 1, "command": "pestov", "seed": 404,
    "parameters": {"manifold": "flat-disc", "draws": 200, "tolerance": 1e-5,
                   "richardson": true, "min_order": 1.9}
  })");
  auto curved = run_text("pestov-curved", R"({
    "version": 1, "command": "pestov", "seed": 405,
    "parameters": {"manifold": "conformal-disc", "draws": 200, "tolerance": 1e-5,
                   "richardson": true, "min_order": 1.9}
  })");
  bool pass = flat.result.status == 0 && curved.result.status == 0;
  gate.line(pass, "energy identity residuals",
            fmt("200 draws each, flat %.2e / curved %.2e <= 1e-5, order >= 1.9%s%s",
                flat.report.contains("max_rel_residual")
                    ? flat.report["max_rel_residual"].get<double>()
                    : -1.0,
                curved.report.contains("max_rel_residual")
                    ? curved.report["max_rel_residual"].get<double>()
                    : -1.0,
                status_note(flat).c_str(), status_note(curved).c_str()));
}

// --------------------------------------------------------------------------
// 5. Sphere-bundle volume identity: both sides within 0.1% of 2 pi^2 on the
//    flat disc at a 256 x 128 fan, under 60 s.
// --------------------------------------------------------------------------
void volume_identity(Gate& gate) {
  auto run = run_text("santalo", R"({
    "version": 1, "command": "santalo", "seed": 0,
    "parameters": {"manifold": "flat-disc",
                   "integrand": {"kind": "constant", "value": 1.0},
                   "fan_boundary": 256, "fan_angle": 128, "max_rel_error": 1e-3}
  })");
  bool pass = run.result.status == 0 && run.seconds <= 60.0;
  gate.line(pass, "volume identity at 2 pi^2",
            fmt("256x128 fan, worst side gap %.2e <= 1e-3, %.1f s <= 60 s%s",
                max_check_value(run.report), run.seconds, status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 6. Kernel elements of the attenuated transform: below 1e-7 on the flat
//    disc, and refinement-convergent to zero on a curved metric.
// --------------------------------------------------------------------------
void kernel_elements(Gate& gate) {
  auto flat = make_manifold("flat-disc");
  ScalarField a{2, kr(0.1)};
  ScalarField p{2, 1.0 - coord(0) * coord(0) - coord(1) * coord(1)};
  auto fan = fan_rays(flat, 12, 8);
  double flat_max = kernel_probe(flat, a, p, fan).max_abs;

  auto curved = make_manifold("conformal-disc");
  auto cfan = fan_rays(curved, 12, 8);
  double r1 = kernel_probe(curved, a, p, cfan, 0.02).max_abs;
  double r2 = kernel_probe(curved, a, p, cfan, 0.01).max_abs;
  double r3 = kernel_probe(curved, a, p, cfan, 0.005).max_abs;
  // Halving the step must cut the residual (until it hits rounding noise).
  bool converges = (r2 < 0.6 * r1 || r2 < 1e-9) && (r3 < 0.6 * r2 || r3 < 1e-9) && r3 < 1e-5;

  gate.line(flat_max <= 1e-7 && converges, "transform kernel elements",
            fmt("flat max %.2e <= 1e-7; curved %.1e -> %.1e -> %.1e under refinement",
                flat_max, r1, r2, r3));
}

// --------------------------------------------------------------------------
// 7. Index form on a flat chord of length L: smallest eigenvalue pi^2 / L^2
//    within 1e-4 relative at 400 grid points.
// --------------------------------------------------------------------------
void index_form(Gate& gate) {
  auto M = make_manifold("flat-disc");
  ScalarField zero{2, kr(0.0)};
  double worst = 0.0;
  for (double alpha : {0.0, 0.5}) {
    // Chord entering at (cos pi, sin pi) direction rotated by alpha.
    VecN<double> x0{-1.0 + 1e-9, 0.0};
    VecN<double> v0{std::cos(alpha), std::sin(alpha)};
    auto path = integrate_geodesic(M, x0, v0);
    auto ir = index_min_eig(M, path, zero, 400);
    double want = kPi * kPi / (path.tau * path.tau);
    worst = std::max(worst, std::abs(ir.lambda1 - want) / want);
  }
  gate.line(worst <= 1e-4, "index form eigenvalue",
            fmt("two chords, worst |lambda1 - pi^2/L^2| / (pi^2/L^2) = %.2e <= 1e-4", worst));
}

// --------------------------------------------------------------------------
// 8. Attenuated transform inversion: constant attenuation -0.2, gaussian
//    source, flat disc, relative L2 error <= 5% at a 32x32 grid and 64x64
//    fan, under 5 minutes.
// --------------------------------------------------------------------------
void inversion(Gate& gate) {
  auto run = run_text("invert", R"({
    "version": 1, "command": "xray-invert", "seed": 0,
    "parameters": {"manifold": "flat-disc",
                   "attenuation": {"kind": "constant", "value": -0.2},
                   "source": {"kind": "gaussian", "amplitude": 1.0, "width": 4.0},
                   "grid_n": 32, "fan_boundary": 64, "fan_angle": 64,
                   "max_rel_error": 0.05}
  })");
  double rel = run.report.contains("rel_l2_error") ? run.report["rel_l2_error"].get<double>()
                                                   : -1.0;
  bool pass = run.result.status == 0 && run.seconds <= 300.0;
  gate.line(pass, "attenuated inversion",
            fmt("32x32 grid, 64x64 fan, rel L2 %.3f <= 0.05, %.0f s <= 300 s%s", rel,
                run.seconds, status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 9. Oscillatory family on a conformal curved product: residual decay slope
//    in [1.95, 2.05], eikonal residual <= 1e-10, transport residual <= 1e-5
//    of the amplitude scale, magnetic correction within twice its phase
//    residual.
// --------------------------------------------------------------------------
void oscillatory_family(Gate& gate) {
  auto run = run_text("cgo", R"({
    "version": 1, "command": "cgo-scan", "seed": 0,
    "parameters": {"manifold": "conformal-disc", "conformal": "wavy",
                   "h_list": [0.1, 0.05, 0.025, 0.0125],
                   "slope_range": [1.95, 2.05], "max_eikonal": 1e-10,
                   "max_transport": 1e-5, "magnetic": true}
  })");
  double slope = run.report.contains("slope") ? run.report["slope"].get<double>() : 0.0;
  gate.line(run.result.status == 0, "oscillatory solution family",
            fmt("curved factor + conformal scale, slope %.3f in [1.95, 2.05]%s", slope,
                status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 10. Boundary symbols: flat closed forms at 1e-10, and recovery round trip
//     below 1e-6 relative on five random normalized coefficient sets.
// --------------------------------------------------------------------------
void boundary_recovery(Gate& gate) {
  auto run = run_text("boundary", R"({
    "version": 1, "command": "boundary-recover", "seed": 77,
    "parameters": {"sets": 5, "max_rel_error": 1e-6, "flat_tolerance": 1e-10}
  })");
  gate.line(run.result.status == 0, "boundary jet recovery",
            fmt("flat closed forms + 5 random sets, worst rel %.2e <= 1e-6%s",
                max_check_value(run.report), status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 11. Conformal and gauge operator identities below 1e-5 of the operator
//     scale across 100 random draws on flat and curved coefficient sets.
// --------------------------------------------------------------------------
void gauge_identities(Gate& gate) {
  auto run = run_text("gauge", R"({
    "version": 1, "command": "gauge-check", "seed": 31,
    "parameters": {"draws": 100, "tolerance": 1e-5, "metric": "both"}
  })");
  gate.line(run.result.status == 0, "gauge identities",
            fmt("100 draws flat + curved, worst scaled residual %.2e <= 1e-5%s",
                max_check_value(run.report), status_note(run).c_str()));
}

// --------------------------------------------------------------------------
// 12. Geometry kernel: curvature symmetries, conformal behavior of the Weyl
//     and Cotton tensors, and the warped-product curvature identity, all
//     below 1e-5 of scale.
// --------------------------------------------------------------------------
void geometry_kernel(Gate& gate) {
  // Generic 3D metric for symmetry and Cotton checks.
  ChartMetric g3 = ChartMetric::euclidean(3);
  g3.set(0, 0, 1.3 + 0.2 * sin(coord(0) + coord(1)));
  g3.set(0, 1, 0.15 * coord(2));
  g3.set(0, 2, 0.1 * sin(coord(1)));
  g3.set(1, 1, 1.1 + 0.1 * coord(0) * coord(0));
  g3.set(1, 2, 0.05 * coord(0) * coord(2));
  g3.set(2, 2, 0.9 + 0.15 * cos(coord(0) - coord(2)));
  VecN<double> x3{0.3, -0.2, 0.4};

  auto rep = curvature(g3, x3);
  double scale = std::max(1.0, rep.riemann_norm);
  double sym_dev = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double r = rep.riemann[i][j][k][l];
          sym_dev = std::max(sym_dev, std::abs(r + rep.riemann[j][i][k][l]));
          sym_dev = std::max(sym_dev, std::abs(r + rep.riemann[i][j][l][k]));
          sym_dev = std::max(sym_dev, std::abs(r - rep.riemann[k][l][i][j]));
          sym_dev = std::max(sym_dev, std::abs(r + rep.riemann[i][k][l][j] +
                                               rep.riemann[i][l][j][k]));
        }
  sym_dev /= scale;

  // Cotton tensor is invariant under conformal change in dimension 3.
  Expr c3 = exp(0.4 * sin(coord(0)) + 0.2 * coord(1) * coord(2));
  auto rep3c = curvature(g3.scaled_by(c3), x3);
  double cotton_scale = std::max(1.0, rep.cotton_norm);
  double cotton_dev = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        cotton_dev = std::max(cotton_dev,
                              std::abs(rep3c.cotton[i][j][k] - rep.cotton[i][j][k]));
  cotton_dev /= cotton_scale;

  // Lower-index Weyl tensor scales by the conformal factor in dimension 4.
  ChartMetric g4 = ChartMetric::euclidean(4);
  g4.set(0, 0, 1.2 + 0.2 * sin(coord(1)));
  g4.set(0, 1, 0.1 * coord(2));
  g4.set(0, 3, 0.08 * sin(coord(2)));
  g4.set(1, 1, 1.0 + 0.15 * coord(3) * coord(3));
  g4.set(1, 2, 0.12 * cos(coord(0)));
  g4.set(2, 2, 0.9 + 0.1 * coord(0) * coord(1));
  g4.set(2, 3, 0.05 * coord(1));
  g4.set(3, 3, 1.1 + 0.1 * cos(coord(1) + coord(3)));
  VecN<double> x4{0.2, -0.3, 0.25, 0.1};
  Expr c4 = exp(0.3 * sin(coord(0) + coord(3)) + 0.15 * coord(1));

  auto rep4 = curvature(g4, x4);
  auto rep4c = curvature(g4.scaled_by(c4), x4);
  double cval = eval_value(c4, x4).real();
  double weyl_scale = std::max(1.0, rep4.weyl_norm);
  double weyl_dev = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          weyl_dev = std::max(weyl_dev, std::abs(rep4c.weyl[i][j][k][l] -
                                                 cval * rep4.weyl[i][j][k][l]));
  weyl_dev /= weyl_scale;

  // Warped product e^{2 x1} (dx1^2 + g0): mixed curvature entries R_{1bc1}
  // with b, c transversal vanish identically.
  ChartMetric gw = ChartMetric::euclidean(3);
  Expr warp = exp(2.0 * coord(0));
  gw.set(0, 0, warp);
  gw.set(1, 1, warp * (1.0 + 0.3 * coord(1) * coord(1)));
  gw.set(1, 2, warp * (0.1 * coord(1) * coord(2)));
  gw.set(2, 2, warp * (1.2 + 0.2 * sin(coord(2))));
  VecN<double> xw{0.2, 0.3, -0.4};
  auto repw = curvature(gw, xw);
  double warped_dev = 0.0;
  for (int b = 1; b < 3; ++b)
    for (int c = 1; c < 3; ++c)
      warped_dev = std::max(warped_dev, std::abs(repw.riemann[0][b][c][0]));
  warped_dev /= std::max(1.0, repw.riemann_norm);

  double worst = std::max({sym_dev, cotton_dev, weyl_dev, warped_dev});
  gate.line(worst <= 1e-5, "geometry kernel identities",
            fmt("symmetries %.1e, Cotton %.1e, Weyl %.1e, warped %.1e, all <= 1e-5", sym_dev,
                cotton_dev, weyl_dev, warped_dev));
}

}  // namespace

int main() {
  g_scratch = fs::temp_directory_path() / "ck-acceptance";
  fs::remove_all(g_scratch);
  fs::create_directories(g_scratch);

  std::printf("acceptance gate, documented settings and tolerances\n");
  auto t0 = std::chrono::steady_clock::now();

  Gate gate;
  catalog_sweep(gate);
  bracket_agreement(gate);
  log_weight_structure(gate);
  energy_identity(gate);
  volume_identity(gate);
  kernel_elements(gate);
  index_form(gate);
  inversion(gate);
  oscillatory_family(gate);
  boundary_recovery(gate);
  gauge_identities(gate);
  geometry_kernel(gate);

  double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d/%d passed in %.0f s\n", gate.total - gate.failures, gate.total, total);
  return gate.failures == 0 ? 0 : 1;
}
