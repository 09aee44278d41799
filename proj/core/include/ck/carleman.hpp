// carleman.hpp - limiting-weight verification on cotangent samples.
//
// A weight phi is checked through the pair of symbols
//   a(x,xi) = |xi|^2 - |dphi|^2,   b(x,xi) = 2 <xi, dphi>
// (inner products through the inverse metric). The defining condition is that
// the Poisson bracket {a,b} vanishes on a = b = 0; numerically we evaluate
// the bracket on deterministic characteristic samples and normalize by
// |dphi|^4 so the verdict is invariant under scaling of phi.

#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "ck/geometry.hpp"
#include "ck/tolerance.hpp"

namespace ck {

struct CotangentSample {
  VecN<double> x;
  VecN<double> xi;
};

enum class WeightFamily { Linear, ArgPlane, Log, InvLinear, ArgSphere, LogRatio };

const char* to_string(WeightFamily f);
WeightFamily weight_family_from_string(const std::string& s);

// Affine dressing a * phi0(x - x0) + b of one of the six catalog profiles.
struct WeightSpec {
  WeightFamily family = WeightFamily::Linear;
  double a = 1.0;
  double b = 0.0;
  VecN<double> x0;      // also fixes the ambient dimension
  VecN<double> xi;      // Linear, InvLinear, ArgSphere, LogRatio
  VecN<double> omega1;  // ArgPlane
  VecN<double> omega2;  // ArgPlane
  double theta = 0.0;   // ArgSphere
};

struct EuclideanWeight {
  ScalarField phi;
  // True where the weight is defined and smooth; stays clear of cut sets by a
  // small safety margin.
  std::function<bool(const VecN<double>&)> domain;
};

struct LcwReport {
  double max_bracket = 0.0;  // max |{a,b}| / |dphi|^4 over all samples
  CotangentSample worst_sample;
  bool is_lcw = false;
};

enum class BracketMethod { Formula, Direct };

// Principal symbol |xi|^2 - |dphi|^2 + 2i <xi, dphi> at a cotangent sample.
std::complex<double> symbol_p(const ChartMetric& m, const ScalarField& phi,
                              const CotangentSample& s);

// Poisson bracket {a,b} at a sample. Formula evaluates the closed Hessian
// expression 4 Hess(xi#, xi#) + 4 Hess(grad, grad); Direct differentiates a
// and b in (x, xi) and contracts Hamilton-style. The two agree identically,
// characteristic sample or not.
double bracket(const ChartMetric& m, const ScalarField& phi, const CotangentSample& s,
               BracketMethod method);

// k covectors with |xi| = |dphi| and <xi, dphi> = 0, from a deterministic
// low-discrepancy sweep of the g-orthogonal sphere; the sweep phase is a hash
// of the base point so repeated runs reproduce.
std::vector<CotangentSample> characteristic_samples(const ChartMetric& m, const ScalarField& phi,
                                                    const VecN<double>& x, int k);

LcwReport lcw_report(const ChartMetric& m, const ScalarField& phi,
                     const std::vector<VecN<double>>& points, int k, const Tolerance& tol = {});

EuclideanWeight euclidean_weight(const WeightSpec& spec);

// With f(s) = s + (h / 2 eps) s^2 and phi distance-normalized (|dphi| = 1),
// the convexified symbols satisfy
//   {a~, b~} = 4 (f'' o phi)(f' o phi)^2 |dphi|^4 + 4 (f'' o phi) <dphi, xi#>^2.
// Returns the worst absolute deviation between that closed form and the
// direct bracket of f o phi over the samples.
double convexified_bracket_check(const ChartMetric& m, const ScalarField& phi, double eps, double h,
                                 const std::vector<CotangentSample>& samples,
                                 const Tolerance& tol = {});

}  // namespace ck
