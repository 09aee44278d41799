#include "ck/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace ck {

Chart Chart::box(int dim, double lo_, double hi_) {
  Chart c;
  c.dim = dim;
  if (dim < 2 || dim > kJetMaxVars) throw std::runtime_error("geometry: chart dimension out of range");
  for (int i = 0; i < dim; ++i) {
    c.lo[i] = lo_;
    c.hi[i] = hi_;
    c.names[i] = "x" + std::to_string(i + 1);
  }
  return c;
}

Chart Chart::box(int dim, std::initializer_list<double> lo_, std::initializer_list<double> hi_) {
  if (int(lo_.size()) != dim || int(hi_.size()) != dim)
    throw std::runtime_error("geometry: chart bound count does not match dimension");
  Chart c = box(dim, 0.0, 1.0);
  std::copy(lo_.begin(), lo_.end(), c.lo.begin());
  std::copy(hi_.begin(), hi_.end(), c.hi.begin());
  return c;
}

bool Chart::contains(const VecN<double>& x, double margin) const {
  if (x.n != dim) return false;
  for (int i = 0; i < dim; ++i)
    if (!(x[i] > lo[i] + margin && x[i] < hi[i] - margin)) return false;
  return true;
}

ChartMetric ChartMetric::euclidean(int dim) {
  ChartMetric m;
  m.chart = Chart::box(dim, -1e6, 1e6);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) m.set(i, j, kr(i == j ? 1.0 : 0.0));
  return m;
}

ChartMetric ChartMetric::scaled_by(const Expr& c) const {
  ChartMetric out;
  out.chart = chart;
  for (int i = 0; i < chart.dim; ++i)
    for (int j = i; j < chart.dim; ++j) out.set(i, j, c * at(i, j));
  return out;
}

OneFormField OneFormField::zero(int dim) {
  OneFormField w;
  w.dim = dim;
  for (int i = 0; i < dim; ++i) w.comp[i] = kr(0.0);
  return w;
}

OneFormField OneFormField::differential(const ScalarField& phi) {
  OneFormField w;
  w.dim = phi.dim;
  for (int i = 0; i < phi.dim; ++i) w.comp[i] = deriv(phi.f, i);
  return w;
}

double jet3_step(const VecN<double>& x) {
  double r = 0.0;
  for (int i = 0; i < x.n; ++i) r += x[i] * x[i];
  return std::max(1e-4, 1e-4 * std::sqrt(r));
}

namespace {

// Requires the field to be real to working precision; the weight and
// classification reports are defined for real data only.
void require_real(const Cpx<double>& v, const char* what) {
  if (std::abs(v.im) > 1e-9 * (1.0 + std::abs(v.re)))
    throw std::runtime_error(std::string("geometry: ") + what + " has imaginary part");
}

MatN<double> schouten_from(const MetricJets<double>& mj) {
  const int n = mj.n;
  ChristoffelJets<double> ch = christoffel_jets(mj);
  double riem[kJetMaxVars][kJetMaxVars][kJetMaxVars][kJetMaxVars] = {};
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double rl = 0.0;
          for (int l = 0; l < n; ++l) {
            double s = ch.dG[a][l](b, c) - ch.dG[b][l](a, c);
            for (int m = 0; m < n; ++m)
              s += ch.G[m](b, c) * ch.G[l](a, m) - ch.G[m](a, c) * ch.G[l](b, m);
            rl += mj.g(l, d) * s;
          }
          riem[a][b][c][d] = rl;
        }
  MatN<double> ric(n);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int a = 0; a < n; ++a)
        for (int d = 0; d < n; ++d) s += mj.ginv(a, d) * riem[a][b][c][d];
      ric(b, c) = s;
    }
  double scal = 0.0;
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) scal += mj.ginv(b, c) * ric(b, c);
  MatN<double> p(n);
  if (n >= 3) {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        p(a, b) = (ric(a, b) - scal * mj.g(a, b) / (2.0 * (n - 1))) / (n - 2);
  }
  return p;
}

}  // namespace

HessianReport grad_hessian(const ChartMetric& m, const ScalarField& phi, const VecN<double>& x) {
  const int n = m.chart.dim;
  MetricJets<double> mj = metric_jets(m, x);
  Christoffel<double> ch = christoffel(mj);
  ScalarJets<double> sj = scalar_jets(phi, x);
  require_real(sj.v, "scalar field");
  for (int i = 0; i < n; ++i) require_real(sj.d[i], "scalar field derivative");

  HessianReport rep;
  rep.n = n;
  rep.grad.n = n;
  rep.hessian.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double h = sj.dd(i, j).re;
      for (int l = 0; l < n; ++l) h -= ch.G[l](i, j) * sj.d[l].re;
      rep.hessian(i, j) = h;
    }
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += mj.ginv(i, j) * sj.d[j].re;
    rep.grad[i] = s;
  }
  double g2 = form(mj.g, rep.grad, rep.grad);
  rep.grad_norm = std::sqrt(std::max(0.0, g2));
  if (rep.grad_norm == 0.0) throw std::runtime_error("geometry: zero gradient");

  // Eigenvalues of the Hessian relative to g via the Cholesky frame.
  MatN<double> L = cholesky(mj.g);
  MatN<double> Linv = inverse(L);
  MatN<double> M(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) s += Linv(i, a) * rep.hessian(a, b) * Linv(j, b);
      M(i, j) = s;
    }
  auto eig = sym_eigenvalues(M);
  for (int i = 0; i < n; ++i) rep.eigenvalues[i] = eig[i];

  double hgg = form(rep.hessian, rep.grad, rep.grad);
  rep.lambda = -hgg / g2;
  rep.mu = -hgg / (g2 * rep.grad_norm);
  // D_grad grad, raised index: g^{lk} H_kj grad^j.
  VecN<double> acc(n);
  for (int l = 0; l < n; ++l) {
    double s = 0.0;
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) s += mj.ginv(l, k) * rep.hessian(k, j) * rep.grad[j];
    acc[l] = s;
  }
  rep.kappa = std::sqrt(std::max(0.0, form(mj.g, acc, acc))) / rep.grad_norm;
  return rep;
}

std::complex<double> laplace_beltrami(const ChartMetric& m, const ScalarField& phi,
                                      const VecN<double>& x) {
  const int n = m.chart.dim;
  MetricJets<double> mj = metric_jets(m, x);
  Christoffel<double> ch = christoffel(mj);
  ScalarJets<double> sj = scalar_jets(phi, x);
  std::complex<double> out = 0.0;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      std::complex<double> h = {sj.dd(j, k).re, sj.dd(j, k).im};
      for (int l = 0; l < n; ++l)
        h -= ch.G[l](j, k) * std::complex<double>{sj.d[l].re, sj.d[l].im};
      out += mj.ginv(j, k) * h;
    }
  return out;
}

CurvatureReport curvature(const ChartMetric& m, const VecN<double>& x) {
  const int n = m.chart.dim;
  MetricJets<double> mj = metric_jets(m, x);
  ChristoffelJets<double> ch = christoffel_jets(mj);

  CurvatureReport rep;
  rep.n = n;
  rep.ricci.n = rep.schouten.n = n;
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
          rep.riemann[a][b][c][d] = rl;
        }
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int a = 0; a < n; ++a)
        for (int d = 0; d < n; ++d) s += mj.ginv(a, d) * rep.riemann[a][b][c][d];
      rep.ricci(b, c) = s;
    }
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) rep.scalar += mj.ginv(b, c) * rep.ricci(b, c);

  if (n >= 3) {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        rep.schouten(a, b) =
            (rep.ricci(a, b) - rep.scalar * mj.g(a, b) / (2.0 * (n - 1))) / (n - 2);
    if (n >= 4) {
      // Weyl = Riemann + P /\ g (Kulkarni-Nomizu); identically zero when n = 3.
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c)
            for (int d = 0; d < n; ++d)
              rep.weyl[a][b][c][d] = rep.riemann[a][b][c][d] + rep.schouten(a, c) * mj.g(b, d) +
                                     rep.schouten(b, d) * mj.g(a, c) -
                                     rep.schouten(b, c) * mj.g(a, d) -
                                     rep.schouten(a, d) * mj.g(b, c);
    }
    // Cotton C_abc = D_a P_bc - D_b P_ac. The derivative of the Schouten
    // tensor is a third-order quantity, taken by central differences.
    double h = jet3_step(x);
    MatN<double> dp[kJetMaxVars];
    for (int a = 0; a < n; ++a) {
      VecN<double> xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      MatN<double> pp = schouten_from(metric_jets(m, xp));
      MatN<double> pm = schouten_from(metric_jets(m, xm));
      dp[a].n = n;
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) dp[a](b, c) = (pp(b, c) - pm(b, c)) / (2.0 * h);
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          double s = dp[a](b, c) - dp[b](a, c);
          for (int l = 0; l < n; ++l)
            s += -ch.G[l](a, c) * rep.schouten(b, l) + ch.G[l](b, c) * rep.schouten(a, l);
          rep.cotton[a][b][c] = s;
        }
  }

  // Full contractions through the inverse metric.
  double r2 = 0.0, w2 = 0.0, c2 = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int e = 0; e < n; ++e)
        for (int f = 0; f < n; ++f)
          for (int c = 0; c < n; ++c)
            for (int d = 0; d < n; ++d)
              for (int p = 0; p < n; ++p)
                for (int q = 0; q < n; ++q) {
                  double w = mj.ginv(a, c) * mj.ginv(b, d) * mj.ginv(e, p) * mj.ginv(f, q);
                  r2 += w * rep.riemann[a][b][e][f] * rep.riemann[c][d][p][q];
                  w2 += w * rep.weyl[a][b][e][f] * rep.weyl[c][d][p][q];
                }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d)
          for (int e = 0; e < n; ++e)
            for (int f = 0; f < n; ++f)
              c2 += mj.ginv(a, d) * mj.ginv(b, e) * mj.ginv(c, f) * rep.cotton[a][b][c] *
                    rep.cotton[d][e][f];
  rep.riemann_norm = std::sqrt(std::max(0.0, r2));
  rep.weyl_norm = std::sqrt(std::max(0.0, w2));
  rep.cotton_norm = std::sqrt(std::max(0.0, c2));
  return rep;
}

FieldClassifyReport field_classify(const ChartMetric& m, const OneFormField& Xflat,
                                   const std::vector<VecN<double>>& points, const Tolerance& tol) {
  const int n = m.chart.dim;
  if (points.empty()) throw std::runtime_error("geometry: field_classify needs sample points");
  FieldClassifyReport rep;
  double scale = 1.0;
  for (const auto& x : points) {
    MetricJets<double> mj = metric_jets(m, x);
    Christoffel<double> ch = christoffel(mj);
    OneFormJets<double> oj = oneform_jets(Xflat, x);
    for (int i = 0; i < n; ++i) {
      require_real(oj.a[i], "one-form");
      for (int j = 0; j < n; ++j) require_real(oj.da(j, i), "one-form derivative");
    }
    // Covariant derivative of the one-form: (DX)_ji = d_j X_i - G^s_ji X_s.
    MatN<double> dx(n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double s = oj.da(j, i).re;
        for (int l = 0; l < n; ++l) s -= ch.G[l](j, i) * oj.a[l].re;
        dx(j, i) = s;
      }
    auto gnorm2 = [&](const MatN<double>& t) {
      double s = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c)
            for (int d = 0; d < n; ++d)
              s += mj.ginv(a, c) * mj.ginv(b, d) * t(a, b) * t(c, d);
      return std::sqrt(std::max(0.0, s));
    };
    MatN<double> sym(n), dev(n);
    double div = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) sym(a, b) = dx(a, b) + dx(b, a);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) div += mj.ginv(a, b) * dx(a, b);
    double lam = 2.0 * div / n;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) dev(a, b) = sym(a, b) - lam * mj.g(a, b);
    rep.parallel_dev = std::max(rep.parallel_dev, gnorm2(dx));
    rep.killing_dev = std::max(rep.killing_dev, gnorm2(sym));
    rep.conformal_dev = std::max(rep.conformal_dev, gnorm2(dev));
    rep.lambda_samples.push_back(lam);
    double xn2 = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) xn2 += mj.ginv(a, b) * oj.a[a].re * oj.a[b].re;
    scale = std::max({scale, std::sqrt(std::max(0.0, xn2)), gnorm2(dx)});
  }
  if (rep.parallel_dev <= tol.bound(scale))
    rep.cls = FieldClass::Parallel;
  else if (rep.killing_dev <= tol.bound(scale))
    rep.cls = FieldClass::Killing;
  else if (rep.conformal_dev <= tol.bound(scale))
    rep.cls = FieldClass::ConformalKilling;
  else
    rep.cls = FieldClass::None;
  return rep;
}

SecondFundamentalReport second_fundamental_form(const ChartMetric& m, const SurfacePatch& patch,
                                                const VecN<double>& u, const VecN<double>& ref) {
  const int n = patch.dim_ambient;
  const int k = patch.dim_param;
  if (k != n - 1) throw std::runtime_error("geometry: patch must be a hypersurface");
  if (n != m.chart.dim) throw std::runtime_error("geometry: patch/metric dimension mismatch");

  SecondFundamentalReport rep;
  rep.k = k;
  rep.induced.n = rep.ell.n = k;

  using D = Dual<double>;
  for (int a = 0; a < k; ++a) {
    // All geometry along the patch, carrying d/du_a as the dual direction.
    VecN<Cpx<Jet2<D>>> coords(k);
    for (int b = 0; b < k; ++b) {
      coords[b].re = Jet2<D>::variable(k, b, D(u[b], a == b ? 1.0 : 0.0));
      coords[b].im = Jet2<D>::constant(k, D(0.0));
    }
    VecN<D> xv(n);
    MatN<D> tang(n);  // tang(b, i) = component i of tangent T_b
    for (int i = 0; i < n; ++i) {
      if (!patch.map[i]) throw std::runtime_error("geometry: patch map component unset");
      Cpx<Jet2<D>> e = eval_expr<Jet2<D>>(patch.map[i], coords);
      xv[i] = e.re.v;
      for (int b = 0; b < k; ++b) tang(b, i) = e.re.g[b];
    }
    MetricJets<D> mj = metric_jets(m, xv);
    Christoffel<D> ch = christoffel(mj);

    // Gram matrix of the tangents and projection coefficients for ref.
    MatN<D> gram(k);
    VecN<D> rhs(k);
    VecN<D> refv(n);
    for (int i = 0; i < n; ++i) refv[i] = D(ref[i]);
    for (int b = 0; b < k; ++b) {
      for (int c = 0; c < k; ++c) {
        D s{};
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) s = s + mj.g(i, j) * tang(b, i) * tang(c, j);
        gram(b, c) = s;
      }
      D s{};
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s = s + mj.g(i, j) * refv[i] * tang(b, j);
      rhs[b] = s;
    }
    MatN<D> gram_inv = inverse(gram);
    VecN<D> nor(n);
    for (int i = 0; i < n; ++i) {
      D s = refv[i];
      for (int b = 0; b < k; ++b)
        for (int c = 0; c < k; ++c) s = s - gram_inv(b, c) * rhs[c] * tang(b, i);
      nor[i] = s;
    }
    D nn{};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) nn = nn + mj.g(i, j) * nor[i] * nor[j];
    if (val(nn) < 1e-20) throw std::runtime_error("geometry: reference vector tangent to patch");
    D inv_len = 1.0 / sqrt(nn);
    for (int i = 0; i < n; ++i) nor[i] = nor[i] * inv_len;

    // ell_ab = < D_{T_a} N, T_b >; the dual part of N carries dN/du_a.
    for (int b = 0; b < k; ++b) {
      double s = 0.0;
      for (int l = 0; l < n; ++l) {
        double dn = nor[l].d;
        for (int j2 = 0; j2 < n; ++j2)
          for (int mm = 0; mm < n; ++mm)
            dn += val(ch.G[l](j2, mm)) * val(tang(a, j2)) * val(nor[mm]);
        for (int i2 = 0; i2 < n; ++i2) s += val(mj.g(l, i2)) * dn * val(tang(b, i2));
      }
      rep.ell(a, b) = s;
    }
    if (a == 0) {
      for (int b = 0; b < k; ++b)
        for (int c = 0; c < k; ++c) rep.induced(b, c) = val(gram(b, c));
    }
  }
  // Symmetrize against roundoff and extract principal curvatures.
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      double s = 0.5 * (rep.ell(a, b) + rep.ell(b, a));
      rep.ell(a, b) = rep.ell(b, a) = s;
    }
  MatN<double> L = cholesky(rep.induced);
  MatN<double> Linv = inverse(L);
  MatN<double> M(k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) s += Linv(i, a) * rep.ell(a, b) * Linv(j, b);
      M(i, j) = s;
    }
  auto eig = sym_eigenvalues(M);
  double mean = 0.0;
  for (int i = 0; i < k; ++i) {
    rep.principal[i] = eig[i];
    mean += eig[i];
  }
  mean /= k;
  for (int i = 0; i < k; ++i)
    rep.umbilic_dev = std::max(rep.umbilic_dev, std::abs(rep.principal[i] - mean));
  return rep;
}

}  // namespace ck
