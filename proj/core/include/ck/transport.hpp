// transport.hpp - geodesics on 2D simple manifolds with boundary.
//
// A manifold is a metric on a chart plus a defining function beta (positive
// inside, zero on the boundary, negative outside). Geodesics are integrated
// with fixed-step RK4 and exit times located by bisection on beta; Jacobi
// fields, polar normal coordinates and the attenuated index form all ride on
// the same integrator.

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ck/geometry.hpp"
#include "ck/tolerance.hpp"

namespace ck {

struct SimpleDiagnostics {
  bool convex = false;
  double min_boundary_curvature = 0.0;
  bool no_conjugate_points = false;
  bool polar_charts_ok = false;
  bool simple = false;
};

struct SimpleManifold {
  ChartMetric metric;        // dim 2
  ScalarField boundary_fn;   // beta > 0 inside, = 0 on the boundary
  VecN<double> center;       // star center for boundary parametrization
  mutable std::optional<SimpleDiagnostics> diagnostics;
};

struct GeodesicSample {
  double t = 0.0;
  VecN<double> x;
  VecN<double> v;
};

struct GeodesicPath {
  std::vector<GeodesicSample> samples;  // includes t = 0 and t = tau
  double tau = 0.0;
  VecN<double> start;
  bool entered_at_boundary = false;
};

struct IndexFormReport {
  double lambda1 = 0.0;
  int grid = 0;
  double epsilon_fan = 0.0;
};

struct BoundarySample {
  VecN<double> x;
  double s = 0.0;          // arclength from the parametrization origin
  VecN<double> tangent;    // unit, g-orthonormal with inward
  VecN<double> inward;     // unit inward normal
};

struct FanRay {
  VecN<double> x;
  VecN<double> v;      // unit inward direction
  double s = 0.0;      // boundary arclength of the foot point
  double alpha = 0.0;  // angle from the inward normal
};

// Gaussian curvature from exact order-2 metric jets (no finite differences).
double gauss_curvature(const ChartMetric& m, const VecN<double>& x);

// step <= 0 picks (chart diagonal)/2000.
GeodesicPath integrate_geodesic(const SimpleManifold& M, const VecN<double>& x0,
                                const VecN<double>& v0, double step = 0.0);

// One RK4 step of the geodesic equation, for quadrature layers that re-march
// stored rays at their own node spacing.
GeodesicSample geodesic_step(const ChartMetric& m, const GeodesicSample& s, double h);

// The step size integrate_geodesic uses when the caller passes step = 0.
double default_step(const SimpleManifold& M, double step = 0.0);

double boundary_length(const SimpleManifold& M, int resolution = 2048);
std::vector<BoundarySample> boundary_samples(const SimpleManifold& M, int count);

// Min principal curvature of the boundary over uniform-arclength samples,
// with the orientation that makes the flat unit disc come out +1.
double boundary_convexity(const SimpleManifold& M, int samples);

/// Inward fan over the boundary: uniform arclength x uniform angle in
// (-pi/2 + guard, pi/2 - guard) measured from the inward normal.
std::vector<FanRay> fan_rays(const SimpleManifold& M, int n_boundary, int n_angle,
                             double guard = 0.01);

// First zero of the normal Jacobi field along the path, if any.
std::optional<double> conjugate_point_scan(const SimpleManifold& M, const GeodesicPath& path);

// Smallest Dirichlet eigenvalue of -D^2 - K - a^2 on (0, tau).
IndexFormReport index_min_eig(const SimpleManifold& M, const GeodesicPath& path,
                              const ScalarField& a, int grid = 400);
IndexFormReport index_fan_min_eig(const SimpleManifold& M, const std::vector<GeodesicPath>& fan,
                                  const ScalarField& a, int grid = 400);

// Polar normal coordinates about an interior point: geodesics out of omega
// parametrized by (r, theta), with the angular Jacobi field integrated
// alongside so the induced metric dr^2 + m dtheta^2 can be checked.
class PolarNormal {
 public:
  PolarNormal(const SimpleManifold& M, const VecN<double>& omega, double step = 0.0);

  VecN<double> point(double r, double theta) const;
  VecN<double> velocity(double r, double theta) const;
  double m(double r, double theta) const;           // |d_theta|_g^2
  double cross_term(double r, double theta) const;  // g(d_r, d_theta)
  // Geodesic distance / initial angle of a chart point (Newton shooting).
  std::pair<double, double> forward(const VecN<double>& xp) const;

  const VecN<double>& origin() const { return omega_; }

 private:
  struct Ray;  // x, v, J, W at radius r
  Ray trace(double r, double theta) const;

  const SimpleManifold* M_;
  VecN<double> omega_;
  MatN<double> frame_;  // columns: g-orthonormal vector frame at omega
  double step_;
};

PolarNormal polar_normal(const SimpleManifold& M, const VecN<double>& omega);

// Convexity + conjugate-point + polar-chart surrogate for simplicity; the
// result is cached on the manifold.
SimpleDiagnostics certify_simple(const SimpleManifold& M, int boundary_samples_n = 64,
                                 int fan_boundary = 16, int fan_angle = 9);

}  // namespace ck
