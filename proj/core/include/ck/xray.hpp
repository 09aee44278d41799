// xray.hpp - attenuated geodesic ray transform on 2D simple manifolds.
//
// Forward integrals run composite Simpson over RK4 nodes re-marched at
// uniform spacing per ray, with the attenuation integral accumulated by the
// matching cumulative rule. The identity checks (gauge kernel, Pestov,
// Santalo) and the discretized transform with Tikhonov-CG inversion live
// here too.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "ck/transport.hpp"

namespace ck {

struct FanMeasurement {
  struct Entry {
    VecN<double> x, v;
    std::complex<double> value{};
  };
  std::vector<Entry> entries;
};

// Function on the unit sphere bundle for n = 2: an expression in
// (x1, x2, zeta) where zeta is the direction angle in the Cholesky
// orthonormal frame of g at x.
struct SphereBundleFunction {
  Expr f;
};

// Angle of a tangent vector in the g-orthonormal frame at x.
double sm_angle(const ChartMetric& m, const VecN<double>& x, const VecN<double>& v);

FanMeasurement forward(const SimpleManifold& M, const ScalarField& a, const ScalarField& f,
                       const OneFormField* alpha, const std::vector<FanRay>& fan,
                       double step = 0.0);

struct KernelProbeReport {
  double max_abs = 0.0;         // max |measurement| over the fan
  bool boundary_vanishes = true;
  double boundary_max = 0.0;    // max |p| over boundary samples
};

// Applies the transform to ap + dp(xi); exactly zero in the continuum when
// p vanishes on the boundary.
KernelProbeReport kernel_probe(const SimpleManifold& M, const ScalarField& a,
                               const ScalarField& p, const std::vector<FanRay>& fan,
                               double step = 0.0);

// Both sides of the Pestov energy identity at one point of SM. Jets of the
// degree-0 homogeneous extension are exact by default; fd_step > 0 switches
// the second-order jets to central differences (for refinement studies).
// When scale is given it receives the largest term magnitude in the
// identity, for normalized pass/fail decisions.
double pestov_residual(const SimpleManifold& M, const SphereBundleFunction& u,
                       const VecN<double>& x, double zeta, double fd_step = 0.0,
                       double* scale = nullptr);

struct SantaloReport {
  double lhs = 0.0;       // integral of v over SM
  double rhs = 0.0;       // fan-quadrature side
  double residual = 0.0;  // |lhs - rhs|
  bool converged = true;  // refinement check, when requested
};

SantaloReport santalo_residual(const SimpleManifold& M, const SphereBundleFunction& v,
                               int n_boundary = 256, int n_angle = 128,
                               bool check_refinement = false);

struct GridSpec {
  int nx = 0, ny = 0;
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  static GridSpec over_chart(const Chart& c, int nx, int ny);
  int dofs() const { return nx * ny; }
};

enum class Unknowns { Function, FunctionPlusForm };

struct TransformSystem {
  GridSpec grid;
  Unknowns unknowns = Unknowns::Function;
  Eigen::MatrixXcd matrix;          // rows = fan rays, cols = nodal unknowns
  double regularization = 0.0;      // 0 means "pick the default at solve time"
  std::vector<int> zero_rows;       // rays that missed the grid support
};

TransformSystem build_system(const SimpleManifold& M, const ScalarField& a,
                             const std::vector<FanRay>& fan, const GridSpec& grid,
                             Unknowns unknowns, double step = 0.0);

struct InvertReport {
  Eigen::VectorXcd coeffs;
  int iterations = 0;
  double residual = 0.0;  // relative normal-equation residual at exit
  bool converged = false;
};

// Tikhonov least squares via conjugate gradients on the normal equations.
InvertReport invert(const TransformSystem& system, const FanMeasurement& y,
                    double reg_override = -1.0);

// Binary matrix cache: "XRTM", version u32 (1 = real, 2 = complex
// interleaved), rows u32, cols u32, row-major little-endian f64.
void save_system(const std::string& path, const TransformSystem& system);
Eigen::MatrixXcd load_system_matrix(const std::string& path);

// Bilinear interpolation weights of the function block, exposed so tests and
// reconstruction reports can evaluate grid coefficient vectors.
std::complex<double> grid_eval(const GridSpec& grid, const Eigen::VectorXcd& coeffs,
                               const VecN<double>& x);

}  // namespace ck
