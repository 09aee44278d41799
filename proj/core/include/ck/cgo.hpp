// cgo.hpp - complex geometrical optics data on cylinder-type metrics.
//
// The metrics handled here are conformal multiples of a product: a positive
// scale c times dx1^2 + g0 on R x D, with g0 a simple 2D factor. In polar
// normal coordinates (r, theta) about an interior point omega of D the
// product part becomes dx1^2 + dr^2 + m(r,theta) dtheta^2, so the complex
// phase rho = x1 + i r solves the eikonal equation outright and the leading
// amplitude is (c m)^{-1/4} a0(x1 + i r) b(theta) with a0 holomorphic.
//
// Everything below either assembles those pieces into expression-level fields
// on the (x1, r, theta) chart, or measures on a grid how well they satisfy
// the equations they are supposed to satisfy. Nothing here is assumed: the
// holomorphy of a0, the phase equation for the magnetic correction, and the
// h^2 decay of the conjugated operator are all checked numerically and the
// deviations reported.

#pragma once

#include <optional>
#include <vector>

#include "ck/geometry.hpp"
#include "ck/transport.hpp"

namespace ck {

// Conformal product metric c * (dx1^2 + g0), described on a working box in
// cylinder polar coordinates (x1, r, theta). The radial window must stay
// away from r = 0 (the polar axis) and inside the conjugate-free range of
// the polar chart of g0 about omega.
//
// polar_m is the closed form of m(r, theta) when one is known (flat disc
// about its center: r^2; Poincare disc: sinh^2 r). When absent, assemble()
// fits m from the numerically integrated polar chart.
struct AdmissibleMetric {
  ScalarField c;   // positive conformal factor, a function of (x1, r, theta)
  SimpleManifold g0;
  VecN<double> omega;           // polar center in the g0 chart
  Chart chart;                  // (x1, r, theta) box
  std::optional<Expr> polar_m;  // closed-form m(r, theta), coords (1, 2)
};

// Amplitude data. The assembled amplitude is
//   a = (c m)^{-1/4} * e^{i Phi} * a0(x1 + i r) * b(theta),
// which is exactly |g|^{-1/4} c^{1/2} a0 b since det g = c^3 m. a0 must be
// holomorphic in z = x1 + i r; that is verified wherever the amplitude is
// used, never assumed.
struct CgoAmplitude {
  Expr a0;  // function of coords 0, 1 through z = x1 + i r
  Expr b;   // function of coord 2
  std::optional<ScalarField> phi_mag;  // magnetic phase Phi, when present
};

// Catalog of phase-holomorphic a0 factors used throughout the tests.
Expr a0_one();
Expr a0_exp(double lambda);  // e^{i lambda (x1 + i r)}
Expr a0_power(int k);        // (x1 + i r)^k

struct AssembledCgo {
  ChartMetric metric;  // c * diag(1, 1, m) on the (x1, r, theta) chart
  Expr m;              // theta-theta factor of g0 in polar form
  double m_dev = 0.0;      // worst |m expression - polar chart m| at check nodes
  double dm_dev = 0.0;     // worst radial-derivative mismatch, jets against differences
  double cross_dev = 0.0;  // worst |g0(d_r, d_theta)| (exact polar form has 0)
  double radial_dev = 0.0; // worst | |d_r|^2_{g0} - 1 |
};

// Builds the 3D chart metric and validates the polar description of g0 along
// the way: radial rays must stay unit speed, the mixed dr dtheta term must
// vanish, and the (given or fitted) m must match the integrated polar chart.
// Throws if the conformal factor fails positivity, if the radial window
// leaves the chart of g0, or if a conjugate point shows up (m <= 0).
AssembledCgo assemble(const AdmissibleMetric& am, int check_radial = 6, int check_angular = 8);

// Radial floor for amplitude work: 5% of the diameter of the g0 factor,
// estimated from boundary samples about omega.
double min_radius(const AdmissibleMetric& am);

// Assembled scalar amplitude (c m)^{-1/4} e^{i Phi} a0 b as an expression on
// the (x1, r, theta) chart.
Expr amplitude_expr(const AdmissibleMetric& am, const AssembledCgo& G, const CgoAmplitude& amp);

// Max over an n^3 grid of cell centers of |<d rho, d rho>_g| with the
// complex-bilinear pairing and rho = x1 + i r. For the correct phase this is
// pure roundoff; imag_phase substitutes a different imaginary part (in the
// chart coordinates) so deliberately wrong phases can be scored too.
double eikonal_residual(const AdmissibleMetric& am, const AssembledCgo& G, int n = 8,
                        const Expr* imag_phase = nullptr);

struct TransportReport {
  double residual = 0.0;  // grid max of |4 dbar a + (dbar log(c m)) a [+ magnetic]|
  double scale = 0.0;     // grid max of |a|
  double a0_dbar = 0.0;   // grid max of |dbar a0|: holomorphy defect of the input
};

// Transport equation residual for the assembled amplitude, with
// dbar = (d_x1 + i d_r) / 2 taken through exact jets. When A is given and the
// amplitude carries a magnetic phase, the checked equation gains the term
// 2 i (A_1 + i A_r) a. Throws if the radial window of the chart dips under
// min_radius(am).
TransportReport transport_residual(const AdmissibleMetric& am, const AssembledCgo& G,
                                   const CgoAmplitude& amp, const OneFormField* A = nullptr,
                                   int n = 10, const Chart* window = nullptr);

struct MagneticPhase {
  ScalarField phi;        // fitted phase, a function of (x1, r, theta)
  double residual = 0.0;  // max |2 dbar Phi + (A_1 + i A_r)| over the window
  double scale = 0.0;     // max |A_1 + i A_r| over the window
  Chart window;           // interior box where the fit and the residual live
  int grid_used = 0;      // quadrature grid that produced the accepted fit
};

// Solves 2 dbar Phi + (A_1 + i A_r) = 0 on each theta slice with the planar
// Cauchy transform: Phi(z) = -(1/2pi) integral of (A_1 + i A_r)(zeta) over
// the (x1, r) rectangle against 1/(z - zeta). Cells near the target use the
// exact cell integral of the kernel, far cells the midpoint value. The
// result is fitted on an interior window and the residual measured through
// jets of the fit; if it misses tol the grid is refined once, and failure
// after that throws.
MagneticPhase magnetic_phase(const AdmissibleMetric& am, const OneFormField& A,
                             double tol = 1e-3, int grid_n = 128, int theta_slices = 1,
                             int fit_order = 24);

struct ScanPoint {
  double h = 0.0;
  double norm = 0.0;  // discrete L2 norm of the conjugated operator residual
};

struct ResidualScanReport {
  std::vector<ScanPoint> points;
  double slope = 0.0;         // least-squares slope of log norm against log h
  double ratio_spread = 0.0;  // max/min of norm / h^2 across the scan
  double eikonal = 0.0;       // prerequisite residuals, for the caller's gate
  double transport = 0.0;
  double amplitude_scale = 0.0;
};

// Applies the conjugated Schrodinger operator
//   P_rho a = -<d rho, d rho> a + h (2 <d rho, d a> + (lap rho) a) + h^2 (-lap a + q a)
// termwise through jets on an n^3 grid and reports the norm for each h. With
// the correct phase and amplitude the first two brackets cancel and the norm
// is h^2 ||(-lap + q) a||, so the log-log slope sits at 2; a wrong phase
// pins the norm at its h^0 term instead. Throws on an empty h list.
ResidualScanReport residual_scan(const AdmissibleMetric& am, const AssembledCgo& G,
                                 const ScalarField& q, const CgoAmplitude& amp,
                                 const std::vector<double>& h_list, int n = 8,
                                 const Expr* imag_phase = nullptr);

}  // namespace ck
