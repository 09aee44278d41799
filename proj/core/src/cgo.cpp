// cgo.cpp - see cgo.hpp for the coordinate conventions.

#include "ck/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace ck {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Fit orders for the numerically integrated polar factor m(r, theta).
constexpr int kFitRadial = 14;
constexpr int kFitAngular = 16;

std::complex<double> cx(const Cpx<double>& z) { return {z.re, z.im}; }

double cellc(double lo, double hi, int i, int n) { return lo + (hi - lo) * (i + 0.5) / n; }

ScalarField phase_field(const Expr* imag_phase) {
  Expr im = imag_phase ? *imag_phase : coord(1);
  return ScalarField{3, coord(0) + kc({0.0, 1.0}) * im};
}

// ---------------------------------------------------------------------------
// Polynomial fitting: Chebyshev interpolation at Lobatto nodes, converted to
// monomial/Horner form. The conversion keeps expression evaluation linear in
// the degree; shared three-term recurrences would be revisited exponentially
// often by the memoless tree walker in expr.hpp.
// ---------------------------------------------------------------------------

std::vector<double> cheb_nodes(int p, double lo, double hi) {
  std::vector<double> x(p + 1);
  for (int j = 0; j <= p; ++j) {
    double t = std::cos(kPi * j / p);  // j = 0 lands on hi
    x[j] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
  }
  return x;
}

// Folded DCT-I coefficients: f(x) = sum_k c[k] T_k(xhat) plainly.
template <class T>
std::vector<T> cheb_coeffs(const std::vector<T>& v) {
  const int p = static_cast<int>(v.size()) - 1;
  std::vector<T> c(p + 1);
  for (int k = 0; k <= p; ++k) {
    T s = 0.5 * v[0] + 0.5 * (k % 2 == 0 ? v[p] : -v[p]);
    for (int j = 1; j < p; ++j) s += std::cos(kPi * j * k / p) * v[j];
    s *= 2.0 / p;
    if (k == 0 || k == p) s *= 0.5;
    c[k] = s;
  }
  return c;
}

// Chebyshev coefficient vector to monomial coefficients in xhat.
template <class T>
std::vector<T> cheb_to_mono(const std::vector<T>& c) {
  const int p = static_cast<int>(c.size()) - 1;
  std::vector<std::vector<double>> t(p + 1);
  t[0] = {1.0};
  if (p >= 1) t[1] = {0.0, 1.0};
  for (int k = 2; k <= p; ++k) {
    t[k].assign(k + 1, 0.0);
    for (int i = 0; i < k; ++i) t[k][i + 1] += 2.0 * t[k - 1][i];
    for (size_t i = 0; i < t[k - 2].size(); ++i) t[k][i] -= t[k - 2][i];
  }
  std::vector<T> mono(p + 1, T{});
  for (int k = 0; k <= p; ++k)
    for (size_t i = 0; i < t[k].size(); ++i) mono[i] += t[k][i] * c[k];
  return mono;
}

Expr coeff_expr(double v) { return kr(v); }
Expr coeff_expr(std::complex<double> v) { return kc(v); }

template <class T>
Expr horner(const std::vector<T>& mono, const Expr& u) {
  int d = static_cast<int>(mono.size()) - 1;
  while (d > 0 && mono[d] == T{}) --d;
  Expr acc = coeff_expr(mono[d]);
  for (int k = d - 1; k >= 0; --k) acc = acc * u + coeff_expr(mono[k]);
  return acc;
}

// xhat in [-1, 1] for a coordinate on [lo, hi].
Expr unit_coord(int ci, double lo, double hi) {
  return (2.0 * coord(ci) - (hi + lo)) / (hi - lo);
}

// Uniform-sample Fourier coefficients over one period: F(u) = A[0] +
// sum_{q>=1} A[q] cos(q u) + B[q] sin(q u), u = 2 pi t / S at the samples.
template <class T>
void fourier_coeffs(const std::vector<T>& f, std::vector<T>& A, std::vector<T>& B) {
  const int S = static_cast<int>(f.size());
  const int qmax = (S - 1) / 2;
  A.assign(qmax + 1, T{});
  B.assign(qmax + 1, T{});
  for (int q = 0; q <= qmax; ++q) {
    T ca{}, cb{};
    for (int t = 0; t < S; ++t) {
      double u = 2.0 * kPi * q * t / S;
      ca += std::cos(u) * f[t];
      cb += std::sin(u) * f[t];
    }
    A[q] = 2.0 / S * ca;
    B[q] = 2.0 / S * cb;
  }
  A[0] *= 0.5;
  return;
}

// ---------------------------------------------------------------------------
// Polar factor of g0.
// ---------------------------------------------------------------------------

double polar_m_sample(const PolarNormal& pn, double r, double theta) {
  double mv = pn.m(r, theta);
  if (!(mv > 1e-10 * r * r))
    throw std::runtime_error("cgo: conjugate point along a radial geodesic (polar factor vanished)");
  return mv;
}

Expr fit_polar_m(const AdmissibleMetric& am, const PolarNormal& pn) {
  const double r_lo = am.chart.lo[1], r_hi = am.chart.hi[1];
  const double th_lo = am.chart.lo[2];
  const double period = am.chart.hi[2] - am.chart.lo[2];
  const auto rn = cheb_nodes(kFitRadial, r_lo, r_hi);

  // Radial Chebyshev coefficients per ray, then Fourier across rays.
  std::vector<std::vector<double>> rad(kFitAngular);
  for (int t = 0; t < kFitAngular; ++t) {
    double theta = th_lo + period * t / kFitAngular;
    std::vector<double> vals(rn.size());
    for (size_t p = 0; p < rn.size(); ++p) vals[p] = polar_m_sample(pn, rn[p], theta);
    rad[t] = cheb_coeffs(vals);
  }

  const int qmax = (kFitAngular - 1) / 2;
  std::vector<std::vector<double>> Ac(kFitRadial + 1), Bc(kFitRadial + 1);
  double cmax = 0.0;
  for (int k = 0; k <= kFitRadial; ++k) {
    std::vector<double> slice(kFitAngular);
    for (int t = 0; t < kFitAngular; ++t) slice[t] = rad[t][k];
    fourier_coeffs(slice, Ac[k], Bc[k]);
    for (double v : Ac[k]) cmax = std::max(cmax, std::abs(v));
    for (double v : Bc[k]) cmax = std::max(cmax, std::abs(v));
  }

  const double prune = 1e-13 * cmax;
  const double w = 2.0 * kPi / period;
  Expr u = unit_coord(1, r_lo, r_hi);
  Expr m_expr;
  for (int q = 0; q <= qmax; ++q) {
    std::vector<double> ac(kFitRadial + 1), bc(kFitRadial + 1);
    double amax = 0.0, bmax = 0.0;
    for (int k = 0; k <= kFitRadial; ++k) {
      ac[k] = Ac[k][q];
      bc[k] = Bc[k][q];
      amax = std::max(amax, std::abs(ac[k]));
      bmax = std::max(bmax, std::abs(bc[k]));
    }
    Expr ang = (q == 0) ? Expr{} : kr(w * q) * (coord(2) - th_lo);
    if (amax > prune) {
      Expr p = horner(cheb_to_mono(ac), u);
      Expr term = q == 0 ? p : p * cos(ang);
      m_expr = m_expr ? m_expr + term : term;
    }
    if (q > 0 && bmax > prune) {
      Expr term = horner(cheb_to_mono(bc), u) * sin(ang);
      m_expr = m_expr ? m_expr + term : term;
    }
  }
  if (!m_expr) throw std::runtime_error("cgo: polar factor fit collapsed");
  return m_expr;
}

// ---------------------------------------------------------------------------
// Exact cell integral of the Cauchy kernel. With Q(A,B) the integral of
// xi / (xi^2 + eta^2) over [0,A] x [0,B], the signed corner function
//   H(X,Y) = integral of 1/(xi + i eta) over [0,X] x [0,Y]
//          = sgn(Y) Q(|X|,|Y|) - i sgn(X) Q(|Y|,|X|)
// assembles the integral over any axis-aligned rectangle by inclusion and
// exclusion; no complex logarithms, so no branch bookkeeping.
// ---------------------------------------------------------------------------

double corner_q(double A, double B) {
  double s = A * A + B * B;
  if (s == 0.0) return 0.0;
  double t = (B > 0.0) ? 0.5 * B * std::log(s / (B * B)) : 0.0;
  return t + A * std::atan2(B, A);
}

std::complex<double> corner_h(double X, double Y) {
  double A = std::abs(X), B = std::abs(Y);
  double sx = (X > 0) - (X < 0), sy = (Y > 0) - (Y < 0);
  return {sy * corner_q(A, B), -sx * corner_q(B, A)};
}

// Integral of 1/(w0 - zeta) over the cell |Re zeta| <= a, |Im zeta| <= b.
std::complex<double> cell_kernel(std::complex<double> w0, double a, double b) {
  double X1 = w0.real() - a, X2 = w0.real() + a;
  double Y1 = w0.imag() - b, Y2 = w0.imag() + b;
  return corner_h(X2, Y2) - corner_h(X1, Y2) - corner_h(X2, Y1) + corner_h(X1, Y1);
}

struct PhaseFitResult {
  ScalarField phi;
  double residual = 0.0;
  double scale = 0.0;
};

PhaseFitResult fit_phase(const AdmissibleMetric& am, const OneFormField& A, const Chart& win,
                         int grid_n, int theta_slices, int fit_order) {
  const double x_lo = am.chart.lo[0], x_hi = am.chart.hi[0];
  const double r_lo = am.chart.lo[1], r_hi = am.chart.hi[1];
  const double th_lo = am.chart.lo[2];
  const double period = am.chart.hi[2] - am.chart.lo[2];
  // Square-ish cells: the midpoint rule's leading error is proportional to
  // hx^2 f_xx + hy^2 f_rr, which cancels against the harmonic kernel only
  // when the two spacings agree.
  const int nx = grid_n;
  const int ny = std::max(12, static_cast<int>(std::lround(grid_n * (r_hi - r_lo) / (x_hi - x_lo))));
  const double hx = (x_hi - x_lo) / nx, hy = (r_hi - r_lo) / ny;
  const double near = std::max(6.0 * std::max(hx, hy), 0.06 * std::max(x_hi - x_lo, r_hi - r_lo));
  const double near2 = near * near;

  auto wval = [&](double x1, double r, double th) {
    VecN<double> x(3);
    x[0] = x1;
    x[1] = r;
    x[2] = th;
    std::complex<double> a1 = eval_value(A.comp[0], x);
    std::complex<double> ar = eval_value(A.comp[1], x);
    return a1 + std::complex<double>(0.0, 1.0) * ar;
  };

  const auto xn = cheb_nodes(fit_order, win.lo[0], win.hi[0]);
  const auto rn = cheb_nodes(fit_order, win.lo[1], win.hi[1]);

  // theta slice -> tensor Chebyshev coefficients of the transform.
  std::vector<std::vector<std::vector<std::complex<double>>>> C(theta_slices);
  for (int s = 0; s < theta_slices; ++s) {
    double theta = th_lo + period * s / theta_slices;
    std::vector<std::vector<std::complex<double>>> w(nx,
                                                     std::vector<std::complex<double>>(ny));
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j)
        w[i][j] = wval(cellc(x_lo, x_hi, i, nx), cellc(r_lo, r_hi, j, ny), theta);

    std::vector<std::vector<std::complex<double>>> vals(
        xn.size(), std::vector<std::complex<double>>(rn.size()));
    for (size_t a = 0; a < xn.size(); ++a) {
      for (size_t b = 0; b < rn.size(); ++b) {
        std::complex<double> z(xn[a], rn[b]), acc = 0.0;
        for (int i = 0; i < nx; ++i) {
          double cxp = cellc(x_lo, x_hi, i, nx);
          double dx = z.real() - cxp;
          for (int j = 0; j < ny; ++j) {
            double dy = z.imag() - cellc(r_lo, r_hi, j, ny);
            std::complex<double> dz(dx, dy);
            if (dx * dx + dy * dy <= near2)
              acc += w[i][j] * cell_kernel(dz, 0.5 * hx, 0.5 * hy);
            else
              acc += w[i][j] * (hx * hy) / dz;
          }
        }
        vals[a][b] = -acc / (2.0 * kPi);
      }
    }
    // Chebyshev transform along r then along x1.
    std::vector<std::vector<std::complex<double>>> ct(xn.size());
    for (size_t a = 0; a < xn.size(); ++a) ct[a] = cheb_coeffs(vals[a]);
    C[s].assign(xn.size(), std::vector<std::complex<double>>(rn.size()));
    for (size_t l = 0; l < rn.size(); ++l) {
      std::vector<std::complex<double>> col(xn.size());
      for (size_t a = 0; a < xn.size(); ++a) col[a] = ct[a][l];
      col = cheb_coeffs(col);
      for (size_t k = 0; k < xn.size(); ++k) C[s][k][l] = col[k];
    }
  }

  // Fourier across slices per (k, l), pruned tensor assembly in Horner form.
  const int qmax = (theta_slices - 1) / 2;
  double cmax = 0.0;
  std::vector<std::vector<std::vector<std::complex<double>>>> FA(
      qmax + 1, std::vector<std::vector<std::complex<double>>>(
                    xn.size(), std::vector<std::complex<double>>(rn.size())));
  auto FB = FA;
  for (size_t k = 0; k < xn.size(); ++k)
    for (size_t l = 0; l < rn.size(); ++l) {
      std::vector<std::complex<double>> slice(theta_slices);
      for (int s = 0; s < theta_slices; ++s) slice[s] = C[s][k][l];
      std::vector<std::complex<double>> fa, fb;
      fourier_coeffs(slice, fa, fb);
      for (int q = 0; q <= qmax; ++q) {
        FA[q][k][l] = fa[q];
        FB[q][k][l] = fb[q];
        cmax = std::max({cmax, std::abs(fa[q]), std::abs(fb[q])});
      }
    }

  const double prune = 1e-12 * cmax;
  const double wfreq = 2.0 * kPi / period;
  Expr ux = unit_coord(0, win.lo[0], win.hi[0]);
  Expr ur = unit_coord(1, win.lo[1], win.hi[1]);
  auto tensor_expr = [&](const std::vector<std::vector<std::complex<double>>>& M) -> Expr {
    // Rows to monomial in r, columns to monomial in x1, then nested Horner.
    std::vector<std::vector<std::complex<double>>> rows(M.size());
    double mmax = 0.0;
    for (const auto& row : M)
      for (auto v : row) mmax = std::max(mmax, std::abs(v));
    if (mmax <= prune) return Expr{};
    for (size_t k = 0; k < M.size(); ++k) rows[k] = cheb_to_mono(M[k]);
    int kd = static_cast<int>(M.size()) - 1;
    std::vector<std::vector<std::complex<double>>> cols(rows[0].size(),
                                                        std::vector<std::complex<double>>(kd + 1));
    for (int k = 0; k <= kd; ++k)
      for (size_t j = 0; j < rows[k].size(); ++j) cols[j][k] = rows[k][j];
    for (auto& cj : cols) cj = cheb_to_mono(cj);
    Expr acc;
    for (int k = kd; k >= 0; --k) {
      std::vector<std::complex<double>> rk(cols.size());
      for (size_t j = 0; j < cols.size(); ++j) rk[j] = cols[j][k];
      Expr pk = horner(rk, ur);
      acc = acc ? acc * ux + pk : pk;
    }
    return acc;
  };

  Expr phi_expr;
  for (int q = 0; q <= qmax; ++q) {
    Expr ang = (q == 0) ? Expr{} : kr(wfreq * q) * (coord(2) - th_lo);
    Expr pa = tensor_expr(FA[q]);
    if (pa) {
      Expr term = q == 0 ? pa : pa * cos(ang);
      phi_expr = phi_expr ? phi_expr + term : term;
    }
    if (q > 0) {
      Expr pb = tensor_expr(FB[q]);
      if (pb) {
        Expr term = pb * sin(ang);
        phi_expr = phi_expr ? phi_expr + term : term;
      }
    }
  }
  if (!phi_expr) phi_expr = kr(0.0);

  PhaseFitResult out;
  out.phi = ScalarField{3, phi_expr};

  // Residual of 2 dbar Phi + (A_1 + i A_r) through jets of the fit.
  const int ns = 10;
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < ns; ++j)
      for (int k = 0; k < std::max(1, 2 * theta_slices); ++k) {
        VecN<double> x(3);
        x[0] = cellc(win.lo[0], win.hi[0], i, ns);
        x[1] = cellc(win.lo[1], win.hi[1], j, ns);
        x[2] = cellc(th_lo, th_lo + period, k, std::max(1, 2 * theta_slices));
        auto pj = scalar_jets(out.phi, x);
        std::complex<double> dbar = 0.5 * (cx(pj.d[0]) + std::complex<double>(0, 1) * cx(pj.d[1]));
        std::complex<double> w = wval(x[0], x[1], x[2]);
        out.residual = std::max(out.residual, std::abs(2.0 * dbar + w));
        out.scale = std::max(out.scale, std::abs(w));
      }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Expr a0_one() { return kr(1.0); }

Expr a0_exp(double lambda) {
  Expr z = coord(0) + kc({0.0, 1.0}) * coord(1);
  return exp(kc({0.0, 1.0}) * (lambda * z));
}

Expr a0_power(int k) { return pow_int(coord(0) + kc({0.0, 1.0}) * coord(1), k); }

double min_radius(const AdmissibleMetric& am) {
  auto bs = boundary_samples(am.g0, 32);
  double dmax = 0.0;
  for (const auto& s : bs) {
    double d2 = 0.0;
    for (int i = 0; i < s.x.n; ++i) {
      double d = s.x[i] - am.omega[i];
      d2 += d * d;
    }
    dmax = std::max(dmax, std::sqrt(d2));
  }
  return 0.05 * 2.0 * dmax;
}

AssembledCgo assemble(const AdmissibleMetric& am, int check_radial, int check_angular) {
  if (am.chart.dim != 3) throw std::runtime_error("cgo: chart must be (x1, r, theta)");
  if (!am.c.f || am.c.dim != 3) throw std::runtime_error("cgo: conformal factor unset");
  const double r_lo = am.chart.lo[1], r_hi = am.chart.hi[1];
  if (!(r_lo > 0.0)) throw std::runtime_error("cgo: radial window must stay positive");
  const double th_lo = am.chart.lo[2];
  const double period = am.chart.hi[2] - am.chart.lo[2];

  PolarNormal pn = polar_normal(am.g0, am.omega);
  AssembledCgo out;
  out.m = am.polar_m ? *am.polar_m : fit_polar_m(am, pn);

  // Validate the polar description at nodes offset from any fit nodes, and
  // sample the conformal factor for positivity while we are at it.
  for (int i = 0; i < check_radial; ++i) {
    double r = r_lo + (r_hi - r_lo) * (i + 0.382) / check_radial;
    for (int j = 0; j < check_angular; ++j) {
      double theta = th_lo + period * (j + 0.618) / check_angular;
      VecN<double> xp = pn.point(r, theta);
      if (!am.g0.metric.chart.contains(xp))
        throw std::runtime_error("cgo: radial window leaves the g0 chart");
      double mv = polar_m_sample(pn, r, theta);
      VecN<double> q(3);
      q[0] = 0.0;
      q[1] = r;
      q[2] = theta;
      double me = eval_value(out.m, q).real();
      out.m_dev = std::max(out.m_dev, std::abs(me - mv));
      out.cross_dev = std::max(out.cross_dev, std::abs(pn.cross_term(r, theta)));

      // The amplitude equations only ever see m through its expression, so
      // the radial derivative of the expression is checked here against the
      // integrated chart; this is the one place a bad fit can be caught.
      double hr = 1e-3 * (r_hi - r_lo);
      double dm_num = (polar_m_sample(pn, r + hr, theta) - polar_m_sample(pn, r - hr, theta)) /
                      (2.0 * hr);
      auto mjx = scalar_jets(ScalarField{3, out.m}, q);
      out.dm_dev = std::max(out.dm_dev, std::abs(mjx.d[1].re - dm_num));

      auto mj = metric_jets(am.g0.metric, xp);
      VecN<double> v = pn.velocity(r, theta);
      double vv = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) vv += mj.g(a, b) * v[a] * v[b];
      out.radial_dev = std::max(out.radial_dev, std::abs(vv - 1.0));

      for (int t = 0; t < 3; ++t) {
        q[0] = am.chart.lo[0] + (am.chart.hi[0] - am.chart.lo[0]) * (t + 0.5) / 3;
        std::complex<double> cv = eval_value(am.c.f, q);
        if (!(cv.real() > 0.0) || std::abs(cv.imag()) > 1e-9 * (1.0 + std::abs(cv.real())))
          throw std::runtime_error("cgo: conformal factor not positive on the chart");
      }
    }
  }

  out.metric.chart = am.chart;
  if (out.metric.chart.names[0].empty()) {
    out.metric.chart.names[0] = "x1";
    out.metric.chart.names[1] = "r";
    out.metric.chart.names[2] = "theta";
  }
  out.metric.set(0, 0, am.c.f);
  out.metric.set(1, 1, am.c.f);
  out.metric.set(2, 2, am.c.f * out.m);
  out.metric.set(0, 1, kr(0.0));
  out.metric.set(0, 2, kr(0.0));
  out.metric.set(1, 2, kr(0.0));
  return out;
}

Expr amplitude_expr(const AdmissibleMetric& am, const AssembledCgo& G, const CgoAmplitude& amp) {
  if (!amp.a0 || !amp.b) throw std::runtime_error("cgo: amplitude factor unset");
  Expr a = exp(kr(-0.25) * log(am.c.f * G.m)) * amp.a0 * amp.b;
  if (amp.phi_mag) a = a * exp(kc({0.0, 1.0}) * amp.phi_mag->f);
  return a;
}

double eikonal_residual(const AdmissibleMetric& am, const AssembledCgo& G, int n,
                        const Expr* imag_phase) {
  ScalarField rho = phase_field(imag_phase);
  double worst = 0.0;
  VecN<double> x(3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        x[0] = cellc(am.chart.lo[0], am.chart.hi[0], i, n);
        x[1] = cellc(am.chart.lo[1], am.chart.hi[1], j, n);
        x[2] = cellc(am.chart.lo[2], am.chart.hi[2], k, n);
        auto mj = metric_jets(G.metric, x);
        auto rj = scalar_jets(rho, x);
        std::complex<double> ip = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) ip += mj.ginv(a, b) * cx(rj.d[a]) * cx(rj.d[b]);
        worst = std::max(worst, std::abs(ip));
      }
  return worst;
}

TransportReport transport_residual(const AdmissibleMetric& am, const AssembledCgo& G,
                                   const CgoAmplitude& amp, const OneFormField* A, int n,
                                   const Chart* window) {
  const Chart& box = window ? *window : am.chart;
  if (box.lo[1] < min_radius(am) - 1e-12)
    throw std::runtime_error("cgo: radial window touches r = 0");
  ScalarField a_f{3, amplitude_expr(am, G, amp)};
  ScalarField lg{3, log(am.c.f * G.m)};
  ScalarField a0_f{3, amp.a0};
  const std::complex<double> I(0.0, 1.0);

  TransportReport rep;
  VecN<double> x(3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        x[0] = cellc(box.lo[0], box.hi[0], i, n);
        x[1] = cellc(box.lo[1], box.hi[1], j, n);
        x[2] = cellc(box.lo[2], box.hi[2], k, n);
        auto aj = scalar_jets(a_f, x);
        auto lj = scalar_jets(lg, x);
        std::complex<double> av = cx(aj.v);
        std::complex<double> dbar_a = 0.5 * (cx(aj.d[0]) + I * cx(aj.d[1]));
        std::complex<double> dbar_l = 0.5 * (cx(lj.d[0]) + I * cx(lj.d[1]));
        std::complex<double> res = 4.0 * dbar_a + dbar_l * av;
        if (A) {
          if (!A->comp[0] || !A->comp[1])
            throw std::runtime_error("cgo: magnetic potential components unset");
          std::complex<double> w = eval_value(A->comp[0], x) + I * eval_value(A->comp[1], x);
          res += 2.0 * I * w * av;
        }
        auto a0j = scalar_jets(a0_f, x);
        std::complex<double> dbar_a0 = 0.5 * (cx(a0j.d[0]) + I * cx(a0j.d[1]));
        rep.residual = std::max(rep.residual, std::abs(res));
        rep.scale = std::max(rep.scale, std::abs(av));
        rep.a0_dbar = std::max(rep.a0_dbar, std::abs(dbar_a0));
      }
  return rep;
}

MagneticPhase magnetic_phase(const AdmissibleMetric& am, const OneFormField& A, double tol,
                             int grid_n, int theta_slices, int fit_order) {
  if (A.dim != 3 || !A.comp[0] || !A.comp[1])
    throw std::runtime_error("cgo: magnetic potential must live on the (x1, r, theta) chart");
  Chart win = am.chart;
  double mx = 0.12 * (am.chart.hi[0] - am.chart.lo[0]);
  double mr = 0.12 * (am.chart.hi[1] - am.chart.lo[1]);
  win.lo[0] += mx;
  win.hi[0] -= mx;
  win.lo[1] += mr;
  win.hi[1] -= mr;

  PhaseFitResult fit = fit_phase(am, A, win, grid_n, theta_slices, fit_order);
  int used = grid_n;
  if (fit.residual > tol) {
    PhaseFitResult again = fit_phase(am, A, win, 2 * grid_n, theta_slices, fit_order + 8);
    if (again.residual < fit.residual) {
      fit = again;
      used = 2 * grid_n;
    }
    if (fit.residual > tol)
      throw std::runtime_error("cgo: magnetic phase residual " + std::to_string(fit.residual) +
                               " exceeds tolerance " + std::to_string(tol) + " after refinement");
  }

  MagneticPhase out;
  out.phi = fit.phi;
  out.residual = fit.residual;
  out.scale = fit.scale;
  out.window = win;
  out.grid_used = used;
  return out;
}

ResidualScanReport residual_scan(const AdmissibleMetric& am, const AssembledCgo& G,
                                 const ScalarField& q, const CgoAmplitude& amp,
                                 const std::vector<double>& h_list, int n,
                                 const Expr* imag_phase) {
  if (h_list.empty()) throw std::runtime_error("cgo: empty h list");
  ScalarField a_f{3, amplitude_expr(am, G, amp)};
  ScalarField rho = phase_field(imag_phase);

  ResidualScanReport rep;
  rep.eikonal = eikonal_residual(am, G, n, imag_phase);
  TransportReport tr = transport_residual(am, G, amp, nullptr, n);
  rep.transport = tr.residual;
  rep.amplitude_scale = tr.scale;

  // h-independent term values per grid point: P_rho a = c0 + h c1 + h^2 c2.
  std::vector<std::complex<double>> c0, c1, c2;
  VecN<double> x(3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        x[0] = cellc(am.chart.lo[0], am.chart.hi[0], i, n);
        x[1] = cellc(am.chart.lo[1], am.chart.hi[1], j, n);
        x[2] = cellc(am.chart.lo[2], am.chart.hi[2], k, n);
        auto mj = metric_jets(G.metric, x);
        auto rj = scalar_jets(rho, x);
        auto aj = scalar_jets(a_f, x);
        std::complex<double> av = cx(aj.v);
        std::complex<double> ip_rr = 0.0, ip_ra = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            ip_rr += mj.ginv(a, b) * cx(rj.d[a]) * cx(rj.d[b]);
            ip_ra += mj.ginv(a, b) * cx(rj.d[a]) * cx(aj.d[b]);
          }
        std::complex<double> lap_rho = laplace_beltrami(G.metric, rho, x);
        std::complex<double> lap_a = laplace_beltrami(G.metric, a_f, x);
        std::complex<double> qv = eval_value(q.f, x);
        c0.push_back(-ip_rr * av);
        c1.push_back(2.0 * ip_ra + lap_rho * av);
        c2.push_back(-lap_a + qv * av);
      }

  const double N = static_cast<double>(c0.size());
  for (double h : h_list) {
    double s = 0.0;
    for (size_t t = 0; t < c0.size(); ++t) s += std::norm(c0[t] + h * c1[t] + h * h * c2[t]);
    rep.points.push_back({h, std::sqrt(s / N)});
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  double rmin = 0.0, rmax = 0.0;
  for (const auto& p : rep.points) {
    double lx = std::log(p.h), ly = std::log(std::max(p.norm, 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    double ratio = p.norm / (p.h * p.h);
    if (rmin == 0.0 || ratio < rmin) rmin = ratio;
    rmax = std::max(rmax, ratio);
  }
  const double np = static_cast<double>(rep.points.size());
  double den = np * sxx - sx * sx;
  rep.slope = (np > 1 && den != 0.0) ? (np * sxy - sx * sy) / den : 0.0;
  rep.ratio_spread = (rmin > 0.0) ? rmax / rmin : 0.0;
  return rep;
}

}  // namespace ck
