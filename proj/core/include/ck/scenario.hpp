// scenario.hpp - JSON scenario configs and the pipeline runner behind the CLI.
//
// A scenario names one command, a seed, and a command-specific parameter
// record. There is no expression parser: fields and manifolds are referenced
// by registry name and assembled in code. Parsing is strict (required
// "version": 1, unknown keys rejected at every level, ranges validated) so a
// bad config fails before any numerics run. Every random draw in a pipeline
// comes from the scenario seed through Rng substreams; reports are therefore
// byte-identical across runs except for the timing block.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ck/boundary.hpp"
#include "ck/carleman.hpp"
#include "ck/rng.hpp"
#include "ck/transport.hpp"
#include "ck/xray.hpp"

namespace ck {

// Malformed scenario text: missing or unknown keys, bad types, values out of
// range, unknown registry names. The CLI maps this to exit status 2.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// Registries.
// --------------------------------------------------------------------------

// 2D manifolds-with-boundary: "flat-disc", "conformal-disc", "poincare-disc".
std::vector<std::string> manifold_names();
SimpleManifold make_manifold(const std::string& name);

// Scalar field on the 2D chart selected by kind:
//   constant:  value + i value_im
//   gaussian:  amplitude * exp(-width |x|^2)
//   bump:      amplitude * (1 - |x|^2)
struct FieldSpec {
  std::string kind = "constant";
  double value = 0.0;
  double value_im = 0.0;
  double amplitude = 1.0;
  double width = 1.0;
};
std::vector<std::string> field_kinds();
ScalarField make_field(const FieldSpec& spec);

// Conformal factors on the (x1, r, theta) cylinder chart: "one", "wavy".
std::vector<std::string> conformal_names();
ScalarField make_conformal_factor(const std::string& name);

// --------------------------------------------------------------------------
// Seeded random constructions, shared between the pipelines and the test
// gate. Each consumes draws only from the Rng it is handed.
// --------------------------------------------------------------------------

// Affine-dressed catalog weight with family-appropriate parameters: random
// offset, scale, direction, orthonormal plane pair, sphere angle.
WeightSpec random_weight_spec(WeightFamily family, int dim, Rng& rng);

// Interior sample points for a weight check: uniform in a box around x0,
// kept a standoff away from the weight's cut set (the domain predicate must
// hold on a small coordinate cross around the point, not just at it).
std::vector<VecN<double>> weight_sample_points(const EuclideanWeight& w, int dim, int count,
                                               Rng& rng);

// Smooth function on the sphere bundle: a short Fourier sum in the fiber
// angle with random smooth coefficient fields in x.
SphereBundleFunction random_bundle_function(Rng& rng);

// Normalized boundary coefficient set on a 3D half-space chart (n = 3):
// rotated-diagonal tangentially-polynomial inverse metric whose normal Taylor
// profile keeps the det-trace stationary at the boundary, a tangential
// complex one-form with A_n = 0, and a complex potential.
BoundaryCoefficients random_normalized_coefficients(Rng& rng);

// Random smooth data for operator-identity checks on a 3D chart: a positive
// conformal factor, a complex gauge phase, and a complex test function.
ScalarField random_conformal_scale(Rng& rng);
ScalarField random_gauge_phase(Rng& rng);
ScalarField random_test_function(Rng& rng);

// Fixed coefficient sets the gauge pipeline checks against.
BoundaryCoefficients flat_block_coefficients();
BoundaryCoefficients curved_block_coefficients();

// --------------------------------------------------------------------------
// Command parameter records. Defaults are the documented acceptance
// settings; every numeric field is range-checked at parse time.
// --------------------------------------------------------------------------

struct CheckWeightParams {
  WeightSpec weight;
  int points = 50;
  int directions = 16;
  double tolerance = 1e-6;
};

struct CatalogVerifyParams {
  int draws = 20;
  int points = 50;
  int directions = 16;
  int dim = 3;
  double tolerance = 1e-6;
  std::string csv = "catalog.csv";
};

struct GeodesicParams {
  std::string manifold = "flat-disc";
  double start[2] = {0.0, 0.0};
  double angle = 0.0;  // chart angle of the initial direction
  double step = 0.0;   // 0 picks the integrator default
  double tolerance = 1e-6;
  std::string csv = "geodesic.csv";
};

struct XrayForwardParams {
  std::string manifold = "flat-disc";
  FieldSpec attenuation;                    // default 0
  FieldSpec integrand{"gaussian", 0, 0, 1.0, 4.0};
  int fan_boundary = 32;
  int fan_angle = 16;
  double step = 0.0;
  double tolerance = 1e-6;  // step-refinement agreement, relative
  std::string csv = "xray_forward.csv";
};

struct XrayInvertParams {
  std::string manifold = "flat-disc";
  FieldSpec attenuation{"constant", -0.2, 0, 1.0, 1.0};
  FieldSpec source{"gaussian", 0, 0, 1.0, 4.0};
  int grid_n = 32;
  int fan_boundary = 64;
  int fan_angle = 64;
  double regularization = 0.0;  // 0 picks the solver default
  double max_rel_error = 0.05;
  std::string cache;            // optional XRTM path; reused when present
  std::string csv = "xray_invert.csv";
};

struct PestovParams {
  std::string manifold = "flat-disc";
  int draws = 200;
  double tolerance = 1e-5;   // residual / identity scale
  bool richardson = true;    // finite-difference refinement order check
  double min_order = 1.9;
};

struct SantaloParams {
  std::string manifold = "flat-disc";
  FieldSpec integrand{"constant", 1.0, 0, 1.0, 1.0};
  int fan_boundary = 256;
  int fan_angle = 128;
  double max_rel_error = 1e-3;
  bool check_refinement = false;
};

struct CgoScanParams {
  std::string manifold = "flat-disc";  // the product factor
  std::string conformal = "one";
  double r_window[2] = {0.15, 0.6};
  std::vector<double> h_list{0.1, 0.05, 0.025, 0.0125};
  int grid_n = 8;
  double slope_range[2] = {1.95, 2.05};
  double max_eikonal = 1e-10;
  double max_transport = 1e-5;  // relative to the amplitude scale
  bool magnetic = false;
  std::string csv = "cgo_scan.csv";
};

struct BoundaryRecoverParams {
  int sets = 5;
  double patch_h = 0.015;
  int directions = 0;  // 0 picks the recovery default
  double max_rel_error = 1e-6;
  double flat_tolerance = 1e-10;  // closed-form symbol check
  std::string csv = "boundary_recover.csv";
};

struct GaugeCheckParams {
  int draws = 100;
  double tolerance = 1e-5;        // residual / operator scale
  std::string metric = "both";    // "flat", "curved", or "both"
};

using CommandParams =
    std::variant<CheckWeightParams, CatalogVerifyParams, GeodesicParams, XrayForwardParams,
                 XrayInvertParams, PestovParams, SantaloParams, CgoScanParams,
                 BoundaryRecoverParams, GaugeCheckParams>;

struct Scenario {
  std::string command;
  std::uint64_t seed = 0;
  CommandParams params;
};

// Parse scenario JSON text / load it from a file. Both throw ScenarioError.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

// --------------------------------------------------------------------------
// Runner.
// --------------------------------------------------------------------------

struct RunOptions {
  std::string out_dir = ".";
  int threads = 0;              // 0 leaves the library defaults alone
  double tolerance_scale = 1.0; // multiplies every pass/fail tolerance
};

struct RunResult {
  int status = 0;  // 0 all checks pass, 1 check failed, 2 parse error, 3 runtime error
  std::string report_json;              // full report text (also on disk)
  std::string report_path;              // empty when nothing could be written
  std::vector<std::string> csv_paths;
  std::string diagnostic;               // populated for status 2 and 3
};

// Execute the scenario at the given path and write report.json plus any CSV
// data files into out_dir. Never throws; failures are encoded in status.
RunResult run_scenario(const std::string& scenario_path, const RunOptions& opt = {});

// Same, for already-parsed scenarios (unit tests use this directly).
RunResult run_scenario(const Scenario& sc, const RunOptions& opt = {});

}  // namespace ck
