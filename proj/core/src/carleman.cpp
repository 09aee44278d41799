#include "ck/carleman.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ck/rng.hpp"

namespace ck {

namespace {

constexpr double kGoldenFrac = 0.6180339887498948482;  // 1/golden ratio
constexpr double kTwoPi = 6.283185307179586476925287;

// Deterministic phase in [0, 2pi) from the raw bytes of a point.
double point_phase(const VecN<double>& x) {
  std::string bytes(sizeof(double) * static_cast<size_t>(x.n), '\0');
  for (int i = 0; i < x.n; ++i) std::memcpy(bytes.data() + i * sizeof(double), &x[i], sizeof(double));
  std::uint64_t h = detail::fnv1a(bytes);
  return kTwoPi * ((h >> 11) * 0x1.0p-53);
}

struct SymbolData {
  int n = 0;
  MetricJets<double> mj;
  ScalarJets<double> sj;  // real field, checked
  VecN<double> d;         // dphi components
  double norm2 = 0.0;     // |dphi|^2 through ginv
};

SymbolData symbol_data(const ChartMetric& m, const ScalarField& phi, const VecN<double>& x) {
  SymbolData s;
  s.n = m.chart.dim;
  s.mj = metric_jets(m, x);
  s.sj = scalar_jets(phi, x);
  if (std::abs(s.sj.v.im) > 1e-9 * (1.0 + std::abs(s.sj.v.re)))
    throw std::runtime_error("carleman: weight is not real-valued");
  s.d.n = s.n;
  for (int i = 0; i < s.n; ++i) {
    if (std::abs(s.sj.d[i].im) > 1e-9 * (1.0 + std::abs(s.sj.d[i].re)))
      throw std::runtime_error("carleman: weight is not real-valued");
    s.d[i] = s.sj.d[i].re;
  }
  s.norm2 = form(s.mj.ginv, s.d, s.d);
  return s;
}

}  // namespace

const char* to_string(WeightFamily f) {
  switch (f) {
    case WeightFamily::Linear: return "linear";
    case WeightFamily::ArgPlane: return "arg-plane";
    case WeightFamily::Log: return "log";
    case WeightFamily::InvLinear: return "inv-linear";
    case WeightFamily::ArgSphere: return "arg-sphere";
    case WeightFamily::LogRatio: return "log-ratio";
  }
  return "?";
}

WeightFamily weight_family_from_string(const std::string& s) {
  if (s == "linear") return WeightFamily::Linear;
  if (s == "arg-plane") return WeightFamily::ArgPlane;
  if (s == "log") return WeightFamily::Log;
  if (s == "inv-linear") return WeightFamily::InvLinear;
  if (s == "arg-sphere") return WeightFamily::ArgSphere;
  if (s == "log-ratio") return WeightFamily::LogRatio;
  throw std::runtime_error("carleman: unknown weight family '" + s + "'");
}

std::complex<double> symbol_p(const ChartMetric& m, const ScalarField& phi,
                              const CotangentSample& s) {
  SymbolData sd = symbol_data(m, phi, s.x);
  double xi2 = form(sd.mj.ginv, s.xi, s.xi);
  double mix = form(sd.mj.ginv, s.xi, sd.d);
  return {xi2 - sd.norm2, 2.0 * mix};
}

double bracket(const ChartMetric& m, const ScalarField& phi, const CotangentSample& s,
               BracketMethod method) {
  SymbolData sd = symbol_data(m, phi, s.x);
  const int n = sd.n;
  if (sd.norm2 <= 0.0) throw std::runtime_error("carleman: vanishing differential");

  if (method == BracketMethod::Formula) {
    Christoffel<double> ch = christoffel(sd.mj);
    MatN<double> hess(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double h = sd.sj.dd(i, j).re;
        for (int l = 0; l < n; ++l) h -= ch.G[l](i, j) * sd.d[l];
        hess(i, j) = h;
      }
    VecN<double> grad = matvec(sd.mj.ginv, sd.d);
    VecN<double> xis = matvec(sd.mj.ginv, s.xi);
    return 4.0 * form(hess, xis, xis) + 4.0 * form(hess, grad, grad);
  }

  // Direct evaluation: xi-derivatives of a and b are closed-form, the
  // x-derivatives come from the jets of g and phi.
  std::array<MatN<double>, kJetMaxVars> dginv;
  for (int j = 0; j < n; ++j) {
    dginv[j].n = n;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        double v = 0.0;
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q) v -= sd.mj.ginv(k, p) * sd.mj.dg[j](p, q) * sd.mj.ginv(q, l);
        dginv[j](k, l) = v;
      }
  }
  double out = 0.0;
  for (int j = 0; j < n; ++j) {
    double a_xi = 0.0, b_xi = 0.0;
    for (int l = 0; l < n; ++l) {
      a_xi += 2.0 * sd.mj.ginv(j, l) * s.xi[l];
      b_xi += 2.0 * sd.mj.ginv(j, l) * sd.d[l];
    }
    double a_x = 0.0, b_x = 0.0;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        a_x += dginv[j](k, l) * (s.xi[k] * s.xi[l] - sd.d[k] * sd.d[l]);
        a_x -= 2.0 * sd.mj.ginv(k, l) * sd.sj.dd(j, k).re * sd.d[l];
        b_x += 2.0 * dginv[j](k, l) * s.xi[k] * sd.d[l];
        b_x += 2.0 * sd.mj.ginv(k, l) * s.xi[k] * sd.sj.dd(j, l).re;
      }
    out += a_xi * b_x - a_x * b_xi;
  }
  return out;
}

std::vector<CotangentSample> characteristic_samples(const ChartMetric& m, const ScalarField& phi,
                                                    const VecN<double>& x, int k) {
  const int n = m.chart.dim;
  if (n < 2) throw std::runtime_error("carleman: need dimension >= 2");
  if (k < 1) throw std::runtime_error("carleman: need at least one sample");
  SymbolData sd = symbol_data(m, phi, x);
  if (sd.norm2 <= 0.0) throw std::runtime_error("carleman: vanishing differential");
  const double dnorm = std::sqrt(sd.norm2);

  // Columns of chol(g) are a covector frame orthonormal w.r.t. ginv.
  MatN<double> L = cholesky(sd.mj.g);
  MatN<double> Linv = inverse(L);
  // Coefficients of dphi in that frame.
  VecN<double> c(n);
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (int j = 0; j < n; ++j) v += Linv(i, j) * sd.d[j];
    c[i] = v;
  }
  double cn = 0.0;
  for (int i = 0; i < n; ++i) cn += c[i] * c[i];
  cn = std::sqrt(cn);
  for (int i = 0; i < n; ++i) c[i] /= cn;
  // Orthonormal basis of the complement of c by Gram-Schmidt over e_i.
  std::vector<VecN<double>> basis;
  for (int i = 0; i < n && static_cast<int>(basis.size()) < n - 1; ++i) {
    VecN<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = (i == j) ? 1.0 : 0.0;
    double pc = 0.0;
    for (int j = 0; j < n; ++j) pc += v[j] * c[j];
    for (int j = 0; j < n; ++j) v[j] -= pc * c[j];
    for (const auto& b : basis) {
      double pb = 0.0;
      for (int j = 0; j < n; ++j) pb += v[j] * b[j];
      for (int j = 0; j < n; ++j) v[j] -= pb * b[j];
    }
    double vn = 0.0;
    for (int j = 0; j < n; ++j) vn += v[j] * v[j];
    vn = std::sqrt(vn);
    if (vn < 1e-8) continue;  // e_i nearly parallel to c, skip
    for (int j = 0; j < n; ++j) v[j] /= vn;
    basis.push_back(v);
  }

  const double phase = point_phase(x);
  std::vector<CotangentSample> out;
  out.reserve(k);
  for (int s = 0; s < k; ++s) {
    VecN<double> w(n);
    for (int j = 0; j < n; ++j) w[j] = 0.0;
    if (n == 2) {
      double sign = (s % 2 == 0) ? 1.0 : -1.0;
      for (int j = 0; j < n; ++j) w[j] = sign * basis[0][j];
    } else if (n == 3) {
      double t = phase + kTwoPi * s * kGoldenFrac;
      for (int j = 0; j < n; ++j) w[j] = std::cos(t) * basis[0][j] + std::sin(t) * basis[1][j];
    } else {
      // Fibonacci sweep of the 2-sphere inside the 3-dim complement.
      double z = 1.0 - (2.0 * s + 1.0) / k;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double t = phase + kTwoPi * s * kGoldenFrac;
      for (int j = 0; j < n; ++j)
        w[j] = r * std::cos(t) * basis[0][j] + r * std::sin(t) * basis[1][j] + z * basis[2][j];
    }
    CotangentSample cs;
    cs.x = x;
    cs.xi.n = n;
    for (int j = 0; j < n; ++j) {
      double v = 0.0;
      for (int i = 0; i < n; ++i) v += L(j, i) * w[i];
      cs.xi[j] = dnorm * v;
    }
    out.push_back(std::move(cs));
  }
  return out;
}

LcwReport lcw_report(const ChartMetric& m, const ScalarField& phi,
                     const std::vector<VecN<double>>& points, int k, const Tolerance& tol) {
  if (points.empty()) throw std::runtime_error("carleman: lcw_report needs points");
  LcwReport rep;
  rep.max_bracket = -1.0;
  for (const auto& x : points) {
    SymbolData sd = symbol_data(m, phi, x);
    if (sd.norm2 <= 0.0) throw std::runtime_error("carleman: vanishing differential");
    double n4 = sd.norm2 * sd.norm2;
    for (const auto& s : characteristic_samples(m, phi, x, k)) {
      double v = std::abs(bracket(m, phi, s, BracketMethod::Formula)) / n4;
      if (v > rep.max_bracket) {
        rep.max_bracket = v;
        rep.worst_sample = s;
      }
    }
  }
  rep.is_lcw = rep.max_bracket <= tol.bound(1.0);
  return rep;
}

namespace {

Expr dot_const(const VecN<double>& v, const std::vector<Expr>& y) {
  Expr s = kr(0.0);
  for (int i = 0; i < v.n; ++i) s = s + v[i] * y[i];
  return s;
}

Expr norm2_expr(const std::vector<Expr>& y) {
  Expr s = kr(0.0);
  for (const auto& yi : y) s = s + yi * yi;
  return s;
}

double dotv(const VecN<double>& a, const VecN<double>& b) {
  double s = 0.0;
  for (int i = 0; i < a.n; ++i) s += a[i] * b[i];
  return s;
}

double norm2v(const VecN<double>& a) { return dotv(a, a); }

}  // namespace

EuclideanWeight euclidean_weight(const WeightSpec& spec) {
  const int n = spec.x0.n;
  if (n < 2 || n > kJetMaxVars) throw std::runtime_error("carleman: weight dimension out of range");
  if (spec.a == 0.0) throw std::runtime_error("carleman: weight scale a must be nonzero");
  const bool needs_xi = spec.family == WeightFamily::Linear || spec.family == WeightFamily::InvLinear ||
                        spec.family == WeightFamily::ArgSphere || spec.family == WeightFamily::LogRatio;
  if (needs_xi) {
    if (spec.xi.n != n || norm2v(spec.xi) == 0.0)
      throw std::runtime_error("carleman: family needs a nonzero direction xi");
  }
  if (spec.family == WeightFamily::ArgPlane) {
    if (spec.omega1.n != n || spec.omega2.n != n)
      throw std::runtime_error("carleman: arg-plane needs omega1, omega2");
    if (std::abs(norm2v(spec.omega1) - 1.0) > 1e-12 || std::abs(norm2v(spec.omega2) - 1.0) > 1e-12 ||
        std::abs(dotv(spec.omega1, spec.omega2)) > 1e-12)
      throw std::runtime_error("carleman: omega1, omega2 must be orthonormal");
  }

  std::vector<Expr> y(n);
  for (int i = 0; i < n; ++i) y[i] = coord(i) - spec.x0[i];

  // arg z via the half-angle form 2 atan(Im z / (|z| + Re z)); atan2 keeps it
  // finite approaching the cut from either side.
  auto arg_expr = [](const Expr& re, const Expr& im) {
    return 2.0 * atan2(im, sqrt(re * re + im * im) + re);
  };

  Expr phi0;
  switch (spec.family) {
    case WeightFamily::Linear:
      phi0 = dot_const(spec.xi, y);
      break;
    case WeightFamily::ArgPlane:
      phi0 = arg_expr(dot_const(spec.omega1, y), dot_const(spec.omega2, y));
      break;
    case WeightFamily::Log:
      phi0 = 0.5 * log(norm2_expr(y));
      break;
    case WeightFamily::InvLinear:
      phi0 = dot_const(spec.xi, y) / norm2_expr(y);
      break;
    case WeightFamily::ArgSphere: {
      // w = e^{i theta} ((|y|^2 - |xi|^2) + 2 i <y, xi>)
      Expr q = norm2_expr(y) - norm2v(spec.xi);
      Expr s = 2.0 * dot_const(spec.xi, y);
      Expr re = std::cos(spec.theta) * q - std::sin(spec.theta) * s;
      Expr im = std::sin(spec.theta) * q + std::cos(spec.theta) * s;
      phi0 = arg_expr(re, im);
      break;
    }
    case WeightFamily::LogRatio: {
      Expr plus = kr(0.0), minus = kr(0.0);
      for (int i = 0; i < n; ++i) {
        plus = plus + (y[i] + spec.xi[i]) * (y[i] + spec.xi[i]);
        minus = minus + (y[i] - spec.xi[i]) * (y[i] - spec.xi[i]);
      }
      phi0 = log(plus / minus);
      break;
    }
  }

  EuclideanWeight out;
  out.phi = ScalarField{n, spec.a * phi0 + spec.b};
  const double margin = 1e-8;

  WeightSpec sp = spec;  // captured by the predicate
  out.domain = [sp, n, margin](const VecN<double>& x) -> bool {
    if (x.n != n) return false;
    VecN<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = x[i] - sp.x0[i];
    double y2 = norm2v(y);
    double guard = margin * (1.0 + y2);
    switch (sp.family) {
      case WeightFamily::Linear:
        return true;
      case WeightFamily::Log:
      case WeightFamily::InvLinear:
        return y2 > guard;
      case WeightFamily::ArgPlane: {
        // Cut of the half-angle arg: {Im = 0, Re <= 0}.
        double u = dotv(sp.omega1, y), v = dotv(sp.omega2, y);
        double dist = (u <= 0.0) ? std::abs(v) : std::sqrt(u * u + v * v);
        return dist > margin * (1.0 + std::sqrt(y2));
      }
      case WeightFamily::ArgSphere: {
        double xi2 = norm2v(sp.xi);
        double s = dotv(sp.xi, y);
        double g2 = margin * (1.0 + y2 + xi2);
        double th = std::fmod(sp.theta, kTwoPi);
        if (th < 0) th += kTwoPi;
        if (th < 1e-12 || th > kTwoPi - 1e-12) {
          // {<y,xi> = 0, |y| <= |xi|}
          return !(std::abs(s) <= g2 && y2 <= xi2 + g2);
        }
        if (std::abs(th - kTwoPi / 2.0) < 1e-12) {
          // {<y,xi> = 0, |y| >= |xi|}
          return !(std::abs(s) <= g2 && y2 >= xi2 - g2);
        }
        // Sphere |y + cot(theta) xi|^2 = |xi|^2 / sin^2(theta), half selected
        // by the sign of <y, xi>.
        double ct = std::cos(th) / std::sin(th);
        double rad2 = xi2 / (std::sin(th) * std::sin(th));
        double lhs = y2 + 2.0 * ct * s + ct * ct * xi2;
        bool on_sphere = std::abs(lhs - rad2) <= g2 * (1.0 + rad2);
        bool right_half = (th < kTwoPi / 2.0) ? (s >= -g2) : (s <= g2);
        return !(on_sphere && right_half);
      }
      case WeightFamily::LogRatio: {
        double p = 0.0, m2 = 0.0;
        for (int i = 0; i < n; ++i) {
          p += (y[i] + sp.xi[i]) * (y[i] + sp.xi[i]);
          m2 += (y[i] - sp.xi[i]) * (y[i] - sp.xi[i]);
        }
        return p > guard && m2 > guard;
      }
    }
    return false;
  };
  return out;
}

double convexified_bracket_check(const ChartMetric& m, const ScalarField& phi, double eps,
                                 double h, const std::vector<CotangentSample>& samples,
                                 const Tolerance& tol) {
  if (eps <= 0.0 || h < 0.0 || h / eps >= 1.0)
    throw std::runtime_error("carleman: need 0 <= h/eps < 1");
  const double c = h / eps;
  ScalarField conv{phi.dim, phi.f + (0.5 * c) * (phi.f * phi.f)};
  double worst = 0.0;
  for (const auto& s : samples) {
    SymbolData sd = symbol_data(m, phi, s.x);
    if (std::abs(sd.norm2 - 1.0) > tol.bound(1.0) * 10.0)
      throw std::runtime_error("carleman: weight is not distance-normalized at a sample");
    double pv = sd.sj.v.re;
    double f1 = 1.0 + c * pv;
    double mix = form(sd.mj.ginv, sd.d, s.xi);  // <dphi, xi> = <grad phi, xi#>
    double predicted = 4.0 * c * f1 * f1 * sd.norm2 * sd.norm2 + 4.0 * c * mix * mix;
    double direct = bracket(m, conv, s, BracketMethod::Direct);
    worst = std::max(worst, std::abs(direct - predicted));
  }
  return worst;
}

}  // namespace ck
