#include "ck/transport.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ck {

namespace {

constexpr double kPi = 3.14159265358979323846;

double real_part(const Cpx<double>& v, const char* what) {
  if (std::abs(v.im) > 1e-9 * (1.0 + std::abs(v.re)))
    throw std::runtime_error(std::string("transport: ") + what + " has imaginary part");
  return v.re;
}

double beta_at(const SimpleManifold& M, const VecN<double>& x) {
  return real_part(scalar_jets(M.boundary_fn, x).v, "boundary function");
}

struct BetaJet {
  double v;
  VecN<double> d;
};

BetaJet beta_jet(const SimpleManifold& M, const VecN<double>& x) {
  ScalarJets<double> sj = scalar_jets(M.boundary_fn, x);
  BetaJet b;
  b.v = real_part(sj.v, "boundary function");
  b.d.n = x.n;
  for (int i = 0; i < x.n; ++i) b.d[i] = real_part(sj.d[i], "boundary function gradient");
  return b;
}

// One RK4 step of the geodesic equation; state is (x, v).
struct GeoState {
  VecN<double> x, v;
};

GeoState geo_rhs(const ChartMetric& m, const GeoState& s) {
  MetricJets<double> mj = metric_jets(m, s.x);
  Christoffel<double> ch = christoffel(mj);
  GeoState r;
  r.x = s.v;
  r.v.n = 2;
  for (int l = 0; l < 2; ++l) {
    double a = 0.0;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) a -= ch.G[l](j, k) * s.v[j] * s.v[k];
    r.v[l] = a;
  }
  return r;
}

GeoState geo_axpy(const GeoState& s, double c, const GeoState& d) {
  GeoState r;
  r.x.n = r.v.n = 2;
  for (int i = 0; i < 2; ++i) {
    r.x[i] = s.x[i] + c * d.x[i];
    r.v[i] = s.v[i] + c * d.v[i];
  }
  return r;
}

GeoState geo_step(const ChartMetric& m, const GeoState& s, double h) {
  GeoState k1 = geo_rhs(m, s);
  GeoState k2 = geo_rhs(m, geo_axpy(s, 0.5 * h, k1));
  GeoState k3 = geo_rhs(m, geo_axpy(s, 0.5 * h, k2));
  GeoState k4 = geo_rhs(m, geo_axpy(s, h, k3));
  GeoState r;
  r.x.n = r.v.n = 2;
  for (int i = 0; i < 2; ++i) {
    r.x[i] = s.x[i] + h / 6.0 * (k1.x[i] + 2.0 * k2.x[i] + 2.0 * k3.x[i] + k4.x[i]);
    r.v[i] = s.v[i] + h / 6.0 * (k1.v[i] + 2.0 * k2.v[i] + 2.0 * k3.v[i] + k4.v[i]);
  }
  return r;
}

double chart_diag(const Chart& c) {
  double s = 0.0;
  for (int i = 0; i < c.dim; ++i) s += (c.hi[i] - c.lo[i]) * (c.hi[i] - c.lo[i]);
  return std::sqrt(s);
}

double auto_step(const SimpleManifold& M, double step) {
  if (step > 0.0) return step;
  return chart_diag(M.metric.chart) / 2000.0;
}

}  // namespace

GeodesicSample geodesic_step(const ChartMetric& m, const GeodesicSample& s, double h) {
  GeoState out = geo_step(m, GeoState{s.x, s.v}, h);
  return GeodesicSample{s.t + h, out.x, out.v};
}

double default_step(const SimpleManifold& M, double step) { return auto_step(M, step); }

namespace {

// Cubic Hermite position between two geodesic samples.
VecN<double> hermite(const GeodesicSample& a, const GeodesicSample& b, double t) {
  double h = b.t - a.t;
  double th = (t - a.t) / h;
  double h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
  double h10 = th * (1.0 - th) * (1.0 - th);
  double h01 = th * th * (3.0 - 2.0 * th);
  double h11 = th * th * (th - 1.0);
  VecN<double> r(2);
  for (int i = 0; i < 2; ++i)
    r[i] = h00 * a.x[i] + h * h10 * a.v[i] + h01 * b.x[i] + h * h11 * b.v[i];
  return r;
}

VecN<double> path_point(const GeodesicPath& p, double t) {
  if (t <= 0.0) return p.samples.front().x;
  if (t >= p.tau) return p.samples.back().x;
  size_t lo = 0, hi = p.samples.size() - 1;
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (p.samples[mid].t <= t)
      lo = mid;
    else
      hi = mid;
  }
  return hermite(p.samples[lo], p.samples[hi], t);
}

// Root of beta along the Euclidean chart ray c + r u, r > 0.
double ray_boundary_root(const SimpleManifold& M, const VecN<double>& c, double ux, double uy) {
  double dr = chart_diag(M.metric.chart) / 512.0;
  double r0 = 0.0;
  VecN<double> p(2);
  double b0 = beta_at(M, c);
  if (b0 <= 0.0) throw std::runtime_error("transport: star center not inside the manifold");
  double rmax = chart_diag(M.metric.chart);
  double r1 = dr, b1;
  for (;; r1 += dr) {
    if (r1 > rmax) throw std::runtime_error("transport: boundary not found along ray");
    p[0] = c[0] + r1 * ux;
    p[1] = c[1] + r1 * uy;
    b1 = beta_at(M, p);
    if (b1 <= 0.0) break;
    r0 = r1;
    b0 = b1;
  }
  for (int it = 0; it < 80; ++it) {
    double rm = 0.5 * (r0 + r1);
    p[0] = c[0] + rm * ux;
    p[1] = c[1] + rm * uy;
    double bm = beta_at(M, p);
    if (bm > 0.0)
      r0 = rm;
    else
      r1 = rm;
  }
  return 0.5 * (r0 + r1);
}

struct FramePair {
  VecN<double> inward, tangent;
};

// Unit inward normal and the g-orthonormal tangent at a boundary point.
FramePair boundary_frame(const SimpleManifold& M, const VecN<double>& x) {
  MetricJets<double> mj = metric_jets(M.metric, x);
  BetaJet b = beta_jet(M, x);
  VecN<double> grad = matvec(mj.ginv, b.d);
  double gn = std::sqrt(std::max(0.0, form(mj.g, grad, grad)));
  if (gn < 1e-12) throw std::runtime_error("transport: degenerate boundary gradient");
  FramePair f;
  f.inward.n = f.tangent.n = 2;
  for (int i = 0; i < 2; ++i) f.inward[i] = grad[i] / gn;
  // Rotate by 90 degrees in a g-orthonormal frame.
  MatN<double> L = cholesky(mj.g);
  double c0 = L(0, 0) * f.inward[0] + L(1, 0) * f.inward[1];
  double c1 = L(0, 1) * f.inward[0] + L(1, 1) * f.inward[1];
  MatN<double> Linv = inverse(L);
  // tangent = E * (-c1, c0) with E = L^{-T}
  f.tangent[0] = Linv(0, 0) * (-c1) + Linv(1, 0) * c0;
  f.tangent[1] = Linv(0, 1) * (-c1) + Linv(1, 1) * c0;
  return f;
}

struct BoundaryTable {
  std::vector<double> t;     // star angle
  std::vector<double> s;     // cumulative g-arclength
  std::vector<VecN<double>> x;
  double length = 0.0;
};

BoundaryTable boundary_table(const SimpleManifold& M, int resolution) {
  BoundaryTable tab;
  tab.t.reserve(resolution + 1);
  tab.s.reserve(resolution + 1);
  tab.x.reserve(resolution + 1);
  VecN<double> c = M.center;
  double acc = 0.0;
  VecN<double> prev(2);
  for (int i = 0; i <= resolution; ++i) {
    double t = 2.0 * kPi * i / resolution;
    double r = ray_boundary_root(M, c, std::cos(t), std::sin(t));
    VecN<double> p(2);
    p[0] = c[0] + r * std::cos(t);
    p[1] = c[1] + r * std::sin(t);
    if (i > 0) {
      VecN<double> mid(2), d(2);
      for (int j = 0; j < 2; ++j) {
        mid[j] = 0.5 * (prev[j] + p[j]);
        d[j] = p[j] - prev[j];
      }
      MetricJets<double> mj = metric_jets(M.metric, mid);
      acc += std::sqrt(std::max(0.0, form(mj.g, d, d)));
    }
    tab.t.push_back(t);
    tab.s.push_back(acc);
    tab.x.push_back(p);
    prev = p;
  }
  tab.length = acc;
  return tab;
}

}  // namespace

double gauss_curvature(const ChartMetric& m, const VecN<double>& x) {
  MetricJets<double> mj = metric_jets(m, x);
  ChristoffelJets<double> ch = christoffel_jets(mj);
  const int n = 2;
  double scal = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double rl = 0.0;
          for (int l = 0; l < n; ++l) {
            double s = ch.dG[a][l](b, c) - ch.dG[b][l](a, c);
            for (int mm = 0; mm < n; ++mm)
              s += ch.G[mm](b, c) * ch.G[l](a, mm) - ch.G[mm](a, c) * ch.G[l](b, mm);
            rl += mj.g(l, d) * s;
          }
          scal += mj.ginv(a, d) * mj.ginv(b, c) * rl;
        }
  return 0.5 * scal;
}

GeodesicPath integrate_geodesic(const SimpleManifold& M, const VecN<double>& x0,
                                const VecN<double>& v0, double step) {
  if (M.metric.chart.dim != 2) throw std::runtime_error("transport: need a 2D manifold");
  const double h = auto_step(M, step);
  MetricJets<double> mj0 = metric_jets(M.metric, x0);
  double speed = form(mj0.g, v0, v0);
  if (std::abs(speed - 1.0) > 1e-10)
    throw std::runtime_error("transport: initial velocity is not unit");

  BetaJet b0 = beta_jet(M, x0);
  const double bscale = 1e-9 * (1.0 + std::abs(b0.v));
  GeodesicPath path;
  path.start = x0;
  if (std::abs(b0.v) <= bscale) {
    path.entered_at_boundary = true;
    double inward = b0.d[0] * v0[0] + b0.d[1] * v0[1];
    if (inward <= 0.0) throw std::runtime_error("transport: initial direction points outward");
  } else if (b0.v < 0.0) {
    throw std::runtime_error("transport: start point outside the manifold");
  }

  GeoState s{x0, v0};
  double t = 0.0;
  path.samples.push_back({t, s.x, s.v});
  const long budget = std::max<long>(100000, static_cast<long>(10.0 * chart_diag(M.metric.chart) / h));
  for (long i = 0; i < budget; ++i) {
    GeoState nxt = geo_step(M.metric, s, h);
    double bn = beta_at(M, nxt.x);
    if (bn < 0.0) {
      // Bisect the step fraction; each probe is one RK4 step from s.
      double lo = 0.0, hi = 1.0;
      GeoState end = nxt;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        GeoState probe = geo_step(M.metric, s, mid * h);
        if (beta_at(M, probe.x) > 0.0)
          lo = mid;
        else {
          hi = mid;
          end = probe;
        }
      }
      path.tau = t + hi * h;
      path.samples.push_back({path.tau, end.x, end.v});
      return path;
    }
    s = nxt;
    t += h;
    path.samples.push_back({t, s.x, s.v});
  }
  throw std::runtime_error("transport: step budget exceeded (trapped geodesic?)");
}

double boundary_length(const SimpleManifold& M, int resolution) {
  return boundary_table(M, resolution).length;
}

std::vector<BoundarySample> boundary_samples(const SimpleManifold& M, int count) {
  if (count < 1) throw std::runtime_error("transport: need at least one boundary sample");
  BoundaryTable tab = boundary_table(M, std::max(2048, 8 * count));
  std::vector<BoundarySample> out;
  out.reserve(count);
  size_t j = 0;
  for (int k = 0; k < count; ++k) {
    double target = tab.length * k / count;
    while (j + 1 < tab.s.size() && tab.s[j + 1] < target) ++j;
    double span = tab.s[j + 1] - tab.s[j];
    double w = span > 0.0 ? (target - tab.s[j]) / span : 0.0;
    double t = tab.t[j] + w * (tab.t[j + 1] - tab.t[j]);
    double r = ray_boundary_root(M, M.center, std::cos(t), std::sin(t));
    BoundarySample bs;
    bs.x = VecN<double>(2);
    bs.x[0] = M.center[0] + r * std::cos(t);
    bs.x[1] = M.center[1] + r * std::sin(t);
    bs.s = target;
    FramePair f = boundary_frame(M, bs.x);
    bs.inward = f.inward;
    bs.tangent = f.tangent;
    out.push_back(std::move(bs));
  }
  return out;
}

double boundary_convexity(const SimpleManifold& M, int samples) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& bs : boundary_samples(M, samples)) {
    // Outward normal field N(x) = -grad(beta)/|grad(beta)| near the boundary,
    // differentiated along the tangent with a dual direction.
    using D = Dual<double>;
    VecN<D> xd(2);
    for (int i = 0; i < 2; ++i) xd[i] = D(bs.x[i], bs.tangent[i]);
    MetricJets<D> mj = metric_jets(M.metric, xd);
    Christoffel<D> ch = christoffel(mj);
    ScalarJets<D> sj = scalar_jets<D>(M.boundary_fn, xd);
    VecN<D> grad(2);
    for (int l = 0; l < 2; ++l) {
      D s{};
      for (int k = 0; k < 2; ++k) s = s + mj.ginv(l, k) * sj.d[k].re;
      grad[l] = s;
    }
    D gn2{};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) gn2 = gn2 + mj.g(i, j) * grad[i] * grad[j];
    D inv_gn = 1.0 / sqrt(gn2);
    VecN<D> nout(2);
    for (int l = 0; l < 2; ++l) nout[l] = -(grad[l] * inv_gn);
    // D_T N and its tangential component.
    double kappa = 0.0;
    for (int l = 0; l < 2; ++l) {
      double dn = nout[l].d;
      for (int j = 0; j < 2; ++j)
        for (int mmm = 0; mmm < 2; ++mmm)
          dn += val(ch.G[l](j, mmm)) * bs.tangent[j] * val(nout[mmm]);
      for (int i = 0; i < 2; ++i) kappa += val(mj.g(l, i)) * dn * bs.tangent[i];
    }
    worst = std::min(worst, kappa);
  }
  return worst;
}

std::vector<FanRay> fan_rays(const SimpleManifold& M, int n_boundary, int n_angle, double guard) {
  std::vector<FanRay> out;
  out.reserve(static_cast<size_t>(n_boundary) * n_angle);
  double alo = -0.5 * kPi + guard, ahi = 0.5 * kPi - guard;
  for (const auto& bs : boundary_samples(M, n_boundary)) {
    for (int j = 0; j < n_angle; ++j) {
      double alpha = alo + (j + 0.5) * (ahi - alo) / n_angle;
      FanRay ray;
      ray.x = bs.x;
      ray.v = VecN<double>(2);
      for (int i = 0; i < 2; ++i)
        ray.v[i] = std::cos(alpha) * bs.inward[i] + std::sin(alpha) * bs.tangent[i];
      ray.s = bs.s;
      ray.alpha = alpha;
      out.push_back(std::move(ray));
    }
  }
  return out;
}

namespace {

// Scalar Jacobi equation along a stored path: y'' + K(gamma(t)) y = 0.
struct JacobiState {
  double y, dy;
};

JacobiState jacobi_step(const SimpleManifold& M, const GeodesicPath& p, double t, double h,
                        const JacobiState& s) {
  auto rhs = [&](double tt, const JacobiState& u) -> JacobiState {
    double K = gauss_curvature(M.metric, path_point(p, tt));
    return {u.dy, -K * u.y};
  };
  JacobiState k1 = rhs(t, s);
  JacobiState k2 = rhs(t + 0.5 * h, {s.y + 0.5 * h * k1.y, s.dy + 0.5 * h * k1.dy});
  JacobiState k3 = rhs(t + 0.5 * h, {s.y + 0.5 * h * k2.y, s.dy + 0.5 * h * k2.dy});
  JacobiState k4 = rhs(t + h, {s.y + h * k3.y, s.dy + h * k3.dy});
  return {s.y + h / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
          s.dy + h / 6.0 * (k1.dy + 2 * k2.dy + 2 * k3.dy + k4.dy)};
}

}  // namespace

std::optional<double> conjugate_point_scan(const SimpleManifold& M, const GeodesicPath& path) {
  if (path.samples.size() < 2) throw std::runtime_error("transport: empty path");
  JacobiState s{0.0, 1.0};
  double t = 0.0;
  const double h0 = path.samples[1].t - path.samples[0].t;
  while (t < path.tau - 1e-14) {
    double h = std::min(h0, path.tau - t);
    JacobiState nxt = jacobi_step(M, path, t, h, s);
    if (nxt.y <= 0.0 && t + h > 1e-12) {
      // Sign change in (t, t+h]; bisect the substep.
      double lo = 0.0, hi = h;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        JacobiState probe = jacobi_step(M, path, t, mid, s);
        if (probe.y > 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return t + hi;
    }
    s = nxt;
    t += h;
  }
  return std::nullopt;
}

namespace {

// Smallest eigenvalue of the symmetric tridiagonal matrix with constant
// off-diagonal `off` and diagonal `diag`, by Sturm bisection.
double tridiag_min_eig(const std::vector<double>& diag, double off) {
  double lo = diag[0], hi = diag[0];
  for (double d : diag) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  lo -= 2.0 * std::abs(off) + 1.0;
  hi += 2.0 * std::abs(off) + 1.0;
  // Negative-pivot count of the shifted LDL^T factorization; an exactly
  // singular pivot is clamped to a tiny negative (LAPACK's convention), which
  // keeps the count right when the recurrence lands on 0 and would otherwise
  // skip the -inf pivot that follows it.
  auto count_below = [&](double lam) {
    int cnt = 0;
    double d = 1.0;
    for (size_t i = 0; i < diag.size(); ++i) {
      d = diag[i] - lam - (i == 0 ? 0.0 : off * off / d);
      if (std::abs(d) < 1e-300) d = -1e-300;
      if (d < 0.0) ++cnt;
    }
    return cnt;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double min_eig_on_grid(const SimpleManifold& M, const GeodesicPath& path, const ScalarField& a,
                       int grid) {
  const double tau = path.tau;
  const double h = tau / grid;
  std::vector<double> diag(grid - 1);
  for (int i = 1; i < grid; ++i) {
    VecN<double> x = path_point(path, i * h);
    double K = gauss_curvature(M.metric, x);
    double av = real_part(scalar_jets(a, x).v, "attenuation");
    diag[i - 1] = 2.0 / (h * h) - K - av * av;
  }
  return tridiag_min_eig(diag, -1.0 / (h * h));
}

}  // namespace

IndexFormReport index_min_eig(const SimpleManifold& M, const GeodesicPath& path,
                              const ScalarField& a, int grid) {
  if (grid < 8) throw std::runtime_error("transport: index grid too small");
  if (path.tau <= 0.0) throw std::runtime_error("transport: empty path");
  double fine = min_eig_on_grid(M, path, a, grid);
  double coarse = min_eig_on_grid(M, path, a, grid / 2);
  if (std::abs(fine - coarse) > 5e-3 * std::max(std::abs(fine), 0.1))
    throw std::runtime_error("transport: index grid too coarse (refinement check failed)");
  IndexFormReport rep;
  rep.lambda1 = fine;
  rep.grid = grid;
  rep.epsilon_fan = fine;
  return rep;
}

IndexFormReport index_fan_min_eig(const SimpleManifold& M, const std::vector<GeodesicPath>& fan,
                                  const ScalarField& a, int grid) {
  if (fan.empty()) throw std::runtime_error("transport: empty fan");
  IndexFormReport rep;
  rep.grid = grid;
  rep.lambda1 = std::numeric_limits<double>::infinity();
  for (const auto& p : fan) {
    IndexFormReport one = index_min_eig(M, p, a, grid);
    rep.lambda1 = std::min(rep.lambda1, one.lambda1);
  }
  rep.epsilon_fan = rep.lambda1;
  return rep;
}

// ---------------------------------------------------------------------------
// Polar normal coordinates.
// ---------------------------------------------------------------------------

struct PolarNormal::Ray {
  VecN<double> x, v, J, W;
};

namespace {

struct VarState {
  VecN<double> x, v, J, W;
};

VarState var_rhs(const ChartMetric& m, const VarState& s) {
  VecN<Dual<double>> xd(2);
  // Carry the Jacobi direction through the metric jets, so dGamma comes out
  // exact without assembling third derivatives.
  for (int i = 0; i < 2; ++i) xd[i] = Dual<double>(s.x[i], s.J[i]);
  MetricJets<Dual<double>> mj = metric_jets(m, xd);
  Christoffel<Dual<double>> ch = christoffel(mj);
  VarState r;
  r.x = s.v;
  r.J = s.W;
  r.v.n = r.W.n = 2;
  for (int l = 0; l < 2; ++l) {
    Dual<double> acc{};
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) acc = acc + ch.G[l](j, k) * Dual<double>(s.v[j]) * s.v[k];
    // value: geodesic acceleration; dual: (dGamma . J) v v
    r.v[l] = -acc.v;
    double w = -acc.d;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) w -= 2.0 * val(ch.G[l](j, k)) * s.W[j] * s.v[k];
    r.W[l] = w;
  }
  return r;
}

VarState var_axpy(const VarState& s, double c, const VarState& d) {
  VarState r;
  r.x.n = r.v.n = r.J.n = r.W.n = 2;
  for (int i = 0; i < 2; ++i) {
    r.x[i] = s.x[i] + c * d.x[i];
    r.v[i] = s.v[i] + c * d.v[i];
    r.J[i] = s.J[i] + c * d.J[i];
    r.W[i] = s.W[i] + c * d.W[i];
  }
  return r;
}

VarState var_step(const ChartMetric& m, const VarState& s, double h) {
  VarState k1 = var_rhs(m, s);
  VarState k2 = var_rhs(m, var_axpy(s, 0.5 * h, k1));
  VarState k3 = var_rhs(m, var_axpy(s, 0.5 * h, k2));
  VarState k4 = var_rhs(m, var_axpy(s, h, k3));
  VarState r;
  r.x.n = r.v.n = r.J.n = r.W.n = 2;
  for (int i = 0; i < 2; ++i) {
    r.x[i] = s.x[i] + h / 6.0 * (k1.x[i] + 2 * k2.x[i] + 2 * k3.x[i] + k4.x[i]);
    r.v[i] = s.v[i] + h / 6.0 * (k1.v[i] + 2 * k2.v[i] + 2 * k3.v[i] + k4.v[i]);
    r.J[i] = s.J[i] + h / 6.0 * (k1.J[i] + 2 * k2.J[i] + 2 * k3.J[i] + k4.J[i]);
    r.W[i] = s.W[i] + h / 6.0 * (k1.W[i] + 2 * k2.W[i] + 2 * k3.W[i] + k4.W[i]);
  }
  return r;
}

}  // namespace

PolarNormal::PolarNormal(const SimpleManifold& M, const VecN<double>& omega, double step)
    : M_(&M), omega_(omega), step_(auto_step(M, step)) {
  if (beta_at(M, omega) <= 0.0)
    throw std::runtime_error("transport: polar origin must be interior");
  MetricJets<double> mj = metric_jets(M.metric, omega);
  MatN<double> L = cholesky(mj.g);
  MatN<double> Linv = inverse(L);
  frame_.n = 2;
  // Columns of L^{-T} are a g-orthonormal vector frame.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) frame_(i, j) = Linv(j, i);
}

PolarNormal::Ray PolarNormal::trace(double r, double theta) const {
  VarState s;
  s.x = omega_;
  s.v.n = s.J.n = s.W.n = 2;
  double ct = std::cos(theta), st = std::sin(theta);
  for (int i = 0; i < 2; ++i) {
    s.v[i] = ct * frame_(i, 0) + st * frame_(i, 1);
    s.J[i] = 0.0;
    s.W[i] = -st * frame_(i, 0) + ct * frame_(i, 1);
  }
  double done = 0.0;
  while (done < r - 1e-15) {
    double h = std::min(step_, r - done);
    s = var_step(M_->metric, s, h);
    done += h;
  }
  Ray out;
  out.x = s.x;
  out.v = s.v;
  out.J = s.J;
  out.W = s.W;
  return out;
}

VecN<double> PolarNormal::point(double r, double theta) const { return trace(r, theta).x; }
VecN<double> PolarNormal::velocity(double r, double theta) const { return trace(r, theta).v; }

double PolarNormal::m(double r, double theta) const {
  Ray ray = trace(r, theta);
  MetricJets<double> mj = metric_jets(M_->metric, ray.x);
  return form(mj.g, ray.J, ray.J);
}

double PolarNormal::cross_term(double r, double theta) const {
  Ray ray = trace(r, theta);
  MetricJets<double> mj = metric_jets(M_->metric, ray.x);
  return form(mj.g, ray.v, ray.J);
}

std::pair<double, double> PolarNormal::forward(const VecN<double>& xp) const {
  // Initial guess from the frame coordinates at the origin.
  MetricJets<double> mj0 = metric_jets(M_->metric, omega_);
  MatN<double> L = cholesky(mj0.g);
  VecN<double> dx(2);
  for (int i = 0; i < 2; ++i) dx[i] = xp[i] - omega_[i];
  double c0 = L(0, 0) * dx[0] + L(1, 0) * dx[1];
  double c1 = L(0, 1) * dx[0] + L(1, 1) * dx[1];
  double r = std::sqrt(c0 * c0 + c1 * c1);
  double theta = std::atan2(c1, c0);
  if (r < 1e-14) return {0.0, 0.0};
  const double scale = 1.0 + std::sqrt(dx[0] * dx[0] + dx[1] * dx[1]);
  for (int it = 0; it < 80; ++it) {
    Ray ray = trace(r, theta);
    double f0 = ray.x[0] - xp[0];
    double f1 = ray.x[1] - xp[1];
    if (std::sqrt(f0 * f0 + f1 * f1) <= 1e-12 * scale) return {r, theta};
    // Jacobian columns: d(exp)/dr = v, d(exp)/dtheta = J.
    double a = ray.v[0], b = ray.J[0], c = ray.v[1], d = ray.J[1];
    double det = a * d - b * c;
    if (std::abs(det) < 1e-14) throw std::runtime_error("transport: conjugate point in polar chart");
    double dr = (d * f0 - b * f1) / det;
    double dth = (-c * f0 + a * f1) / det;
    r -= dr;
    theta -= dth;
    if (r < 0.0) {
      r = -r;
      theta += kPi;
    }
  }
  throw std::runtime_error("transport: polar inversion did not converge");
}

PolarNormal polar_normal(const SimpleManifold& M, const VecN<double>& omega) {
  return PolarNormal(M, omega);
}

SimpleDiagnostics certify_simple(const SimpleManifold& M, int boundary_samples_n, int fan_boundary,
                                 int fan_angle) {
  SimpleDiagnostics d;
  d.min_boundary_curvature = boundary_convexity(M, boundary_samples_n);
  d.convex = d.min_boundary_curvature > 0.0;
  d.no_conjugate_points = true;
  for (const auto& ray : fan_rays(M, fan_boundary, fan_angle)) {
    GeodesicPath p = integrate_geodesic(M, ray.x, ray.v);
    if (conjugate_point_scan(M, p).has_value()) {
      d.no_conjugate_points = false;
      break;
    }
  }
  d.polar_charts_ok = true;
  try {
    for (int i = 0; i < 8; ++i) {
      double t = 2.0 * kPi * i / 8.0;
      double rb = ray_boundary_root(M, M.center, std::cos(t), std::sin(t));
      VecN<double> omega(2);
      omega[0] = M.center[0] + 0.45 * rb * std::cos(t);
      omega[1] = M.center[1] + 0.45 * rb * std::sin(t);
      PolarNormal pc(M, omega);
      // Round-trip a few interior probes.
      for (int k = 0; k < 4; ++k) {
        double tt = t + 0.7 + 1.3 * k;
        double rp = 0.35 * ray_boundary_root(M, M.center, std::cos(tt), std::sin(tt));
        VecN<double> target(2);
        target[0] = M.center[0] + rp * std::cos(tt);
        target[1] = M.center[1] + rp * std::sin(tt);
        auto [r, th] = pc.forward(target);
        VecN<double> back = pc.point(r, th);
        double err = std::hypot(back[0] - target[0], back[1] - target[1]);
        if (err > 1e-8) {
          d.polar_charts_ok = false;
          break;
        }
      }
      if (!d.polar_charts_ok) break;
    }
  } catch (const std::exception&) {
    d.polar_charts_ok = false;
  }
  d.simple = d.convex && d.no_conjugate_points && d.polar_charts_ok;
  M.diagnostics = d;
  return d;
}

}  // namespace ck
