// geometry.hpp - charts, metrics, fields, and the tensor calculus on them.
//
// Everything is chart-local: a metric is a symmetric matrix of expressions
// over an open box, and all derived objects (Christoffel symbols, curvature,
// Hessians) are computed pointwise from exact order-2 jets. Third-order
// tensor entries (the Cotton tensor needs them) come from central differences
// of order-2 jets, per the toolkit's differentiation policy.

#pragma once

#include <array>
#include <complex>
#include <initializer_list>
#include <string>
#include <vector>

#include "ck/expr.hpp"
#include "ck/linalg.hpp"
#include "ck/tolerance.hpp"

namespace ck {

struct Chart {
  int dim = 0;
  std::array<double, kJetMaxVars> lo{};
  std::array<double, kJetMaxVars> hi{};
  std::array<std::string, kJetMaxVars> names{};

  static Chart box(int dim, double lo, double hi);
  // Per-axis bounds; both lists must have exactly dim entries.
  static Chart box(int dim, std::initializer_list<double> lo, std::initializer_list<double> hi);
  bool contains(const VecN<double>& x, double margin = 0.0) const;
};

// Symmetric positive-definite matrix field. Symmetry is exact by
// construction: set() stores one expression for both (i,j) and (j,i).
// Positivity is checked wherever the metric is evaluated.
struct ChartMetric {
  Chart chart;
  std::array<Expr, kJetMaxVars * kJetMaxVars> comp{};

  static ChartMetric euclidean(int dim);
  void set(int i, int j, Expr e) {
    comp[i * kJetMaxVars + j] = e;
    comp[j * kJetMaxVars + i] = std::move(e);
  }
  const Expr& at(int i, int j) const { return comp[i * kJetMaxVars + j]; }

  // Conformal multiple c(x) * g with c a positive scalar expression.
  ChartMetric scaled_by(const Expr& c) const;
};

struct ScalarField {
  int dim = 0;
  Expr f;
};

struct OneFormField {
  int dim = 0;
  std::array<Expr, kJetMaxVars> comp{};

  static OneFormField zero(int dim);
  // Exact differential of a scalar field.
  static OneFormField differential(const ScalarField& phi);
};

// --------------------------------------------------------------------------
// Pointwise jet bundles, templated on the scalar ring so callers can carry
// their own derivative directions through the metric algebra.
// --------------------------------------------------------------------------

template <class R>
struct MetricJets {
  int n = 0;
  MatN<R> g, ginv;
  std::array<MatN<R>, kJetMaxVars> dg;                                   // dg[k](i,j) = d_k g_ij
  std::array<std::array<MatN<R>, kJetMaxVars>, kJetMaxVars> d2g;         // d2g[k][l](i,j)
  R detg;
};

template <class R>
struct ScalarJets {
  int n = 0;
  Cpx<R> v;
  VecN<Cpx<R>> d;
  MatN<Cpx<R>> dd;
};

template <class R>
struct OneFormJets {
  int n = 0;
  VecN<Cpx<R>> a;
  MatN<Cpx<R>> da;  // da(j,i) = d_j a_i
};

template <class R>
MetricJets<R> metric_jets(const ChartMetric& m, const VecN<R>& x) {
  const int n = m.chart.dim;
  VecN<Cpx<Jet2<R>>> coords(n);
  for (int i = 0; i < n; ++i) {
    coords[i].re = Jet2<R>::variable(n, i, x[i]);
    coords[i].im = Jet2<R>::constant(n, R(0.0));
  }
  MetricJets<R> out;
  out.n = n;
  out.g.n = out.ginv.n = n;
  for (auto& mm : out.dg) mm.n = n;
  for (auto& row : out.d2g)
    for (auto& mm : row) mm.n = n;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (!m.at(i, j)) throw std::runtime_error("geometry: metric component unset");
      Cpx<Jet2<R>> e = eval_expr<Jet2<R>>(m.at(i, j), coords);
      if (std::abs(val(e.im)) > 1e-9 * (1.0 + std::abs(val(e.re))))
        throw std::runtime_error("geometry: metric component has imaginary part");
      out.g(i, j) = e.re.v;
      out.g(j, i) = e.re.v;
      for (int k = 0; k < n; ++k) {
        out.dg[k](i, j) = e.re.g[k];
        out.dg[k](j, i) = e.re.g[k];
        for (int l = 0; l < n; ++l) {
          out.d2g[k][l](i, j) = e.re.H(k, l);
          out.d2g[k][l](j, i) = e.re.H(k, l);
        }
      }
    }
  }
  // Positivity at the value level: leading principal minors.
  MatN<double> gv(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gv(i, j) = val(out.g(i, j));
  MatN<double> lead;
  for (int k = 1; k <= n; ++k) {
    lead.n = k;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) lead(i, j) = gv(i, j);
    if (det(lead) <= 0.0) throw std::runtime_error("geometry: metric not positive definite");
  }
  out.detg = det(out.g);
  out.ginv = inverse(out.g);
  return out;
}

template <class R>
ScalarJets<R> scalar_jets(const ScalarField& f, const VecN<R>& x) {
  const int n = f.dim;
  VecN<Cpx<Jet2<R>>> coords(n);
  for (int i = 0; i < n; ++i) {
    coords[i].re = Jet2<R>::variable(n, i, x[i]);
    coords[i].im = Jet2<R>::constant(n, R(0.0));
  }
  Cpx<Jet2<R>> e = eval_expr<Jet2<R>>(f.f, coords);
  ScalarJets<R> out;
  out.n = n;
  out.d.n = n;
  out.dd.n = n;
  out.v = {e.re.v, e.im.v};
  for (int i = 0; i < n; ++i) {
    out.d[i] = {e.re.g[i], e.im.g[i]};
    for (int j = 0; j < n; ++j) out.dd(i, j) = {e.re.H(i, j), e.im.H(i, j)};
  }
  return out;
}

template <class R>
OneFormJets<R> oneform_jets(const OneFormField& w, const VecN<R>& x) {
  const int n = w.dim;
  VecN<Cpx<Jet2<R>>> coords(n);
  for (int i = 0; i < n; ++i) {
    coords[i].re = Jet2<R>::variable(n, i, x[i]);
    coords[i].im = Jet2<R>::constant(n, R(0.0));
  }
  OneFormJets<R> out;
  out.n = n;
  out.a.n = n;
  out.da.n = n;
  for (int i = 0; i < n; ++i) {
    if (!w.comp[i]) throw std::runtime_error("geometry: one-form component unset");
    Cpx<Jet2<R>> e = eval_expr<Jet2<R>>(w.comp[i], coords);
    out.a[i] = {e.re.v, e.im.v};
    for (int j = 0; j < n; ++j) out.da(j, i) = {e.re.g[j], e.im.g[j]};
  }
  return out;
}

// Christoffel symbols of the second kind, G[l](j,k), and their first
// derivatives dG[a][l](j,k) = d_a Gamma^l_jk.
template <class R>
struct Christoffel {
  int n = 0;
  std::array<MatN<R>, kJetMaxVars> G;
};

template <class R>
struct ChristoffelJets {
  int n = 0;
  std::array<MatN<R>, kJetMaxVars> G;
  std::array<std::array<MatN<R>, kJetMaxVars>, kJetMaxVars> dG;
};

template <class R>
Christoffel<R> christoffel(const MetricJets<R>& mj) {
  const int n = mj.n;
  Christoffel<R> ch;
  ch.n = n;
  for (auto& mm : ch.G) mm.n = n;
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        R s{};
        for (int m = 0; m < n; ++m)
          s = s + mj.ginv(l, m) * (mj.dg[j](k, m) + mj.dg[k](j, m) - mj.dg[m](j, k));
        s = 0.5 * s;
        ch.G[l](j, k) = s;
        ch.G[l](k, j) = s;
      }
  return ch;
}

template <class R>
ChristoffelJets<R> christoffel_jets(const MetricJets<R>& mj) {
  const int n = mj.n;
  ChristoffelJets<R> ch;
  ch.n = n;
  for (auto& mm : ch.G) mm.n = n;
  for (auto& row : ch.dG)
    for (auto& mm : row) mm.n = n;
  Christoffel<R> base = christoffel(mj);
  ch.G = base.G;
  // d_a g^{lm} = -g^{ls} (d_a g_st) g^{tm}
  std::array<MatN<R>, kJetMaxVars> dginv;
  for (int a = 0; a < n; ++a) {
    dginv[a].n = n;
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < n; ++m) {
        R s{};
        for (int s1 = 0; s1 < n; ++s1)
          for (int t = 0; t < n; ++t) s = s - mj.ginv(l, s1) * mj.dg[a](s1, t) * mj.ginv(t, m);
        dginv[a](l, m) = s;
      }
  }
  for (int a = 0; a < n; ++a)
    for (int l = 0; l < n; ++l)
      for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
          R s{};
          for (int m = 0; m < n; ++m) {
            s = s + 0.5 * dginv[a](l, m) * (mj.dg[j](k, m) + mj.dg[k](j, m) - mj.dg[m](j, k));
            s = s + 0.5 * mj.ginv(l, m) *
                        (mj.d2g[a][j](k, m) + mj.d2g[a][k](j, m) - mj.d2g[a][m](j, k));
          }
          ch.dG[a][l](j, k) = s;
          ch.dG[a][l](k, j) = s;
        }
  return ch;
}

// --------------------------------------------------------------------------
// Reports (plain-double entry points).
// --------------------------------------------------------------------------

struct HessianReport {
  int n = 0;
  VecN<double> grad;        // contravariant gradient
  double grad_norm = 0.0;   // |grad phi|_g
  MatN<double> hessian;     // covariant Hessian (lower indices)
  std::array<double, kJetMaxVars> eigenvalues{};  // of the Hessian w.r.t. g, ascending
  double lambda = 0.0;      // -|grad|^-2 Hess(grad, grad)
  double kappa = 0.0;       // |D_grad grad| / |grad|
  double mu = 0.0;          // -|grad|^-3 Hess(grad, grad)
};

struct CurvatureReport {
  int n = 0;
  // Dense lower-index tensors; indices run over the chart dimension.
  double riemann[kJetMaxVars][kJetMaxVars][kJetMaxVars][kJetMaxVars] = {};
  MatN<double> ricci;
  double scalar = 0.0;
  MatN<double> schouten;
  double weyl[kJetMaxVars][kJetMaxVars][kJetMaxVars][kJetMaxVars] = {};
  double cotton[kJetMaxVars][kJetMaxVars][kJetMaxVars] = {};
  double riemann_norm = 0.0, weyl_norm = 0.0, cotton_norm = 0.0;
};

enum class FieldClass { Parallel, Killing, ConformalKilling, None };

struct FieldClassifyReport {
  FieldClass cls = FieldClass::None;
  double parallel_dev = 0.0;   // max_x |DX|_g
  double killing_dev = 0.0;    // max_x |L_X g|_g
  double conformal_dev = 0.0;  // max_x |L_X g - lambda g|_g
  std::vector<double> lambda_samples;  // (2/n) div X at the sample points
};

// Hypersurface patch: u in R^(n-1) -> chart point.
struct SurfacePatch {
  int dim_ambient = 0;
  int dim_param = 0;
  std::array<Expr, kJetMaxVars> map{};
};

struct SecondFundamentalReport {
  int k = 0;                // patch dimension
  MatN<double> induced;     // first fundamental form
  MatN<double> ell;         // second fundamental form <D_X N, Y>
  std::array<double, kJetMaxVars> principal{};  // eigenvalues of induced^-1 ell
  double umbilic_dev = 0.0;  // max |principal_i - mean|
};

HessianReport grad_hessian(const ChartMetric& m, const ScalarField& phi, const VecN<double>& x);
std::complex<double> laplace_beltrami(const ChartMetric& m, const ScalarField& phi,
                                      const VecN<double>& x);
CurvatureReport curvature(const ChartMetric& m, const VecN<double>& x);
FieldClassifyReport field_classify(const ChartMetric& m, const OneFormField& Xflat,
                                   const std::vector<VecN<double>>& points,
                                   const Tolerance& tol = {});
SecondFundamentalReport second_fundamental_form(const ChartMetric& m, const SurfacePatch& patch,
                                                const VecN<double>& u, const VecN<double>& ref);

// FD step for third-order entries: max(1e-4, 1e-4 * |x|).
double jet3_step(const VecN<double>& x);

}  // namespace ck
