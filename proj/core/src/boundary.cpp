#include "ck/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <vector>

namespace ck {

namespace {

// ---------------------------------------------------------------------------
// Expression utilities. The gauge constructions build closed-form transformed
// coefficients, so they need structural differentiation and substitution on
// top of the lazy Deriv nodes used everywhere else. A little constant folding
// keeps those rebuilt trees from drowning in zeros.
// ---------------------------------------------------------------------------

bool const_value(const Expr& e, std::complex<double>& v) {
  if (e && e->op == ExprOp::Const) { v = e->c; return true; }
  return false;
}

bool is_zero(const Expr& e) {
  std::complex<double> v;
  return const_value(e, v) && v == std::complex<double>(0.0, 0.0);
}

bool is_one(const Expr& e) {
  std::complex<double> v;
  return const_value(e, v) && v == std::complex<double>(1.0, 0.0);
}

Expr sadd(Expr a, Expr b) {
  std::complex<double> va, vb;
  if (is_zero(a)) return b;
  if (is_zero(b)) return a;
  if (const_value(a, va) && const_value(b, vb)) return kc(va + vb);
  return std::move(a) + std::move(b);
}

Expr ssub(Expr a, Expr b) {
  std::complex<double> va, vb;
  if (is_zero(b)) return a;
  if (const_value(a, va) && const_value(b, vb)) return kc(va - vb);
  if (is_zero(a)) return -std::move(b);
  return std::move(a) - std::move(b);
}

Expr smul(Expr a, Expr b) {
  std::complex<double> va, vb;
  if (is_zero(a) || is_zero(b)) return kr(0.0);
  if (is_one(a)) return b;
  if (is_one(b)) return a;
  if (const_value(a, va) && const_value(b, vb)) return kc(va * vb);
  return std::move(a) * std::move(b);
}

Expr sdiv(Expr a, Expr b) {
  std::complex<double> va, vb;
  if (is_zero(a)) return kr(0.0);
  if (is_one(b)) return a;
  if (const_value(a, va) && const_value(b, vb)) return kc(va / vb);
  return std::move(a) / std::move(b);
}

Expr sneg(Expr a) {
  std::complex<double> v;
  if (is_zero(a)) return a;
  if (const_value(a, v)) return kc(-v);
  return -std::move(a);
}

bool contains_deriv(const Expr& e) {
  if (!e) return false;
  if (e->op == ExprOp::Deriv) return true;
  return contains_deriv(e->a) || contains_deriv(e->b);
}

// Structural rebuild with coordinate k replaced by an expression. This is
// composition, so it refuses Deriv nodes: a stored derivative of the original
// field is not the derivative of the composed one.
Expr subst_coord(const Expr& e, int k, const Expr& repl,
                 std::unordered_map<const ExprNode*, Expr>& memo) {
  if (!e) return e;
  auto it = memo.find(e.get());
  if (it != memo.end()) return it->second;
  Expr out;
  switch (e->op) {
    case ExprOp::Const: out = e; break;
    case ExprOp::Coord: out = (e->k == k) ? repl : e; break;
    case ExprOp::Deriv:
      throw std::runtime_error("boundary: cannot substitute through an exact-derivative node");
    default: {
      Expr a = subst_coord(e->a, k, repl, memo);
      Expr b = subst_coord(e->b, k, repl, memo);
      out = (a == e->a && b == e->b) ? e : make_node(e->op, std::move(a), std::move(b), e->k, e->c);
    }
  }
  memo.emplace(e.get(), out);
  return out;
}

Expr subst_coord(const Expr& e, int k, const Expr& repl) {
  std::unordered_map<const ExprNode*, Expr> memo;
  return subst_coord(e, k, repl, memo);
}

// Structural d/d(coord k). Produces a Deriv-free tree for Deriv-free input;
// shared subtrees are differentiated once.
Expr diff_sym(const Expr& e, int k, std::unordered_map<const ExprNode*, Expr>& memo) {
  if (!e) throw std::runtime_error("boundary: cannot differentiate an empty expression");
  auto it = memo.find(e.get());
  if (it != memo.end()) return it->second;
  Expr out;
  switch (e->op) {
    case ExprOp::Const: out = kr(0.0); break;
    case ExprOp::Coord: out = kr(e->k == k ? 1.0 : 0.0); break;
    case ExprOp::Add: out = sadd(diff_sym(e->a, k, memo), diff_sym(e->b, k, memo)); break;
    case ExprOp::Sub: out = ssub(diff_sym(e->a, k, memo), diff_sym(e->b, k, memo)); break;
    case ExprOp::Mul:
      out = sadd(smul(diff_sym(e->a, k, memo), e->b), smul(e->a, diff_sym(e->b, k, memo)));
      break;
    case ExprOp::Div:
      out = sdiv(ssub(smul(diff_sym(e->a, k, memo), e->b), smul(e->a, diff_sym(e->b, k, memo))),
                 smul(e->b, e->b));
      break;
    case ExprOp::Neg: out = sneg(diff_sym(e->a, k, memo)); break;
    case ExprOp::Exp: out = smul(e, diff_sym(e->a, k, memo)); break;
    case ExprOp::Log: out = sdiv(diff_sym(e->a, k, memo), e->a); break;
    case ExprOp::Sqrt: out = sdiv(diff_sym(e->a, k, memo), smul(kr(2.0), e)); break;
    case ExprOp::Sin: out = smul(cos(e->a), diff_sym(e->a, k, memo)); break;
    case ExprOp::Cos: out = sneg(smul(sin(e->a), diff_sym(e->a, k, memo))); break;
    case ExprOp::Tanh: out = smul(ssub(kr(1.0), smul(e, e)), diff_sym(e->a, k, memo)); break;
    case ExprOp::Atan:
      out = sdiv(diff_sym(e->a, k, memo), sadd(kr(1.0), smul(e->a, e->a)));
      break;
    case ExprOp::Atan2:
      out = sdiv(ssub(smul(e->b, diff_sym(e->a, k, memo)), smul(e->a, diff_sym(e->b, k, memo))),
                 sadd(smul(e->a, e->a), smul(e->b, e->b)));
      break;
    case ExprOp::PowInt:
      if (e->k == 0) {
        out = kr(0.0);
      } else {
        out = smul(smul(kr(double(e->k)), pow_int(e->a, e->k - 1)), diff_sym(e->a, k, memo));
      }
      break;
    case ExprOp::Deriv:
      throw std::runtime_error("boundary: requested jet order exceeds what the coefficients provide");
  }
  memo.emplace(e.get(), out);
  return out;
}

Expr diff_sym(const Expr& e, int k) {
  std::unordered_map<const ExprNode*, Expr> memo;
  return diff_sym(e, k, memo);
}

Expr diff_sym_pow(Expr e, int k, int times) {
  for (int j = 0; j < times; ++j) e = diff_sym(e, k);
  return e;
}

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre_01(int p, std::vector<double>& t, std::vector<double>& w) {
  t.assign(p, 0.0);
  w.assign(p, 0.0);
  for (int i = 0; i < p; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (p + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= p; ++j) {
        double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      pp = p * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    t[i] = 0.5 * (1.0 - x);  // descending roots -> ascending nodes
    w[i] = 1.0 / ((1.0 - x * x) * pp * pp);
  }
}

// All multi-indices over `slots` entries with total degree `deg`.
void multi_indices(int slots, int deg, std::array<int, kTangentialCap> cur, int pos,
                   std::vector<std::array<int, kTangentialCap>>& out) {
  if (pos == slots - 1) {
    cur[pos] = deg;
    out.push_back(cur);
    return;
  }
  for (int d = 0; d <= deg; ++d) {
    cur[pos] = d;
    multi_indices(slots, deg - d, cur, pos + 1, out);
  }
}

std::vector<std::array<int, kTangentialCap>> multi_indices(int slots, int deg) {
  std::vector<std::array<int, kTangentialCap>> out;
  multi_indices(slots, deg, {}, 0, out);
  return out;
}

double multi_factorial(const std::array<int, kTangentialCap>& K, int slots) {
  static const double f[] = {1.0, 1.0, 2.0, 6.0, 24.0};
  double r = 1.0;
  for (int i = 0; i < slots; ++i) r *= f[K[i]];
  return r;
}

// (-i)^deg
std::complex<double> neg_i_pow(int deg) {
  switch (deg & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

std::complex<double> eval_plain(const Expr& e, const VecN<double>& x) {
  return eval_value(e, x);
}

SymbolVec pack_point(const VecN<double>& x, const VecN<double>& xi) {
  SymbolVec p(x.n + xi.n);
  for (int i = 0; i < x.n; ++i) p[i] = x[i];
  for (int i = 0; i < xi.n; ++i) p[x.n + i] = xi[i];
  return p;
}

// Determinant and adjugate inverse of a tangential expression block.
Expr block_det(const TangentialBlock& m) {
  if (m.nt == 1) return m.at(0, 0);
  if (m.nt == 2)
    return ssub(smul(m.at(0, 0), m.at(1, 1)), smul(m.at(0, 1), m.at(1, 0)));
  if (m.nt == 3) {
    Expr c0 = ssub(smul(m.at(1, 1), m.at(2, 2)), smul(m.at(1, 2), m.at(2, 1)));
    Expr c1 = ssub(smul(m.at(1, 0), m.at(2, 2)), smul(m.at(1, 2), m.at(2, 0)));
    Expr c2 = ssub(smul(m.at(1, 0), m.at(2, 1)), smul(m.at(1, 1), m.at(2, 0)));
    return sadd(ssub(smul(m.at(0, 0), c0), smul(m.at(0, 1), c1)), smul(m.at(0, 2), c2));
  }
  throw std::runtime_error("boundary: unsupported tangential dimension");
}

TangentialBlock block_inverse(const TangentialBlock& m, const Expr& detm) {
  TangentialBlock inv(m.nt);
  if (m.nt == 1) {
    inv.set(0, 0, sdiv(kr(1.0), m.at(0, 0)));
    return inv;
  }
  if (m.nt == 2) {
    inv.set(0, 0, sdiv(m.at(1, 1), detm));
    inv.set(1, 1, sdiv(m.at(0, 0), detm));
    inv.set(0, 1, sdiv(sneg(m.at(0, 1)), detm));
    return inv;
  }
  // 3x3 adjugate; the block is symmetric so six cofactors suffice.
  auto cof = [&](int a, int b) {
    int r0 = (a + 1) % 3, r1 = (a + 2) % 3, c0 = (b + 1) % 3, c1 = (b + 2) % 3;
    return ssub(smul(m.at(r0, c0), m.at(r1, c1)), smul(m.at(r0, c1), m.at(r1, c0)));
  };
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b) inv.set(a, b, sdiv(cof(b, a), detm));
  return inv;
}

void validate_coefficients(const BoundaryCoefficients& bc) {
  if (bc.n < 3 || bc.n > kJetMaxVars)
    throw std::runtime_error("boundary: dimension must be 3 or 4");
  if (bc.chart.dim != bc.n) throw std::runtime_error("boundary: chart dimension mismatch");
  if (bc.chart.lo[bc.n - 1] != 0.0)
    throw std::runtime_error("boundary: chart must start at x_n = 0");
  if (bc.A.dim != bc.n || bc.q.dim != bc.n)
    throw std::runtime_error("boundary: field dimension mismatch");
  for (int a = 0; a < bc.n; ++a)
    if (!bc.A.comp[a]) throw std::runtime_error("boundary: one-form component unset");
  if (!bc.q.f) throw std::runtime_error("boundary: potential unset");
  const int nt = bc.n - 1;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      if (!bc.g_lower.at(a, b) || !bc.g_upper.at(a, b))
        throw std::runtime_error("boundary: metric block component unset");

  // The principal symbol g^ab xi_a xi_b must stay positive, so the metric
  // block has to be positive definite across the chart box.
  int total = 1;
  for (int a = 0; a < bc.n; ++a) total *= 3;
  for (int s = 0; s < total; ++s) {
    VecN<double> x(bc.n);
    int rem = s;
    for (int a = 0; a < bc.n; ++a) {
      x[a] = bc.chart.lo[a] + (rem % 3 + 0.5) / 3.0 * (bc.chart.hi[a] - bc.chart.lo[a]);
      rem /= 3;
    }
    Eigen::MatrixXd G(nt, nt);
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b) G(a, b) = eval_plain(bc.g_lower.at(a, b), x).real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.eigenvalues()(0) <= 0.0)
      throw std::runtime_error("boundary: metric block is not positive definite on the chart");
  }
}

// Interior sample points of the tangential box at x_n = 0.
std::vector<VecN<double>> boundary_samples(const BoundaryCoefficients& bc, int per_axis = 3) {
  const int nt = bc.n - 1;
  std::vector<VecN<double>> pts;
  int total = 1;
  for (int a = 0; a < nt; ++a) total *= per_axis;
  for (int s = 0; s < total; ++s) {
    VecN<double> x(bc.n);
    int rem = s;
    for (int a = 0; a < nt; ++a) {
      int idx = rem % per_axis;
      rem /= per_axis;
      double fr = (idx + 1.0) / (per_axis + 1.0);
      x[a] = bc.chart.lo[a] + fr * (bc.chart.hi[a] - bc.chart.lo[a]);
    }
    x[bc.n - 1] = 0.0;
    pts.push_back(x);
  }
  return pts;
}

}  // namespace

// ---------------------------------------------------------------------------
// Types.
// ---------------------------------------------------------------------------

std::complex<double> eval_symbol_value(const Expr& e, const SymbolVec& p) {
  VecN<Cpx<double>, kSymbolVarsCap> x(p.n);
  for (int i = 0; i < p.n; ++i) x[i] = Cpx<double>(p[i], 0.0);
  Cpx<double> r = eval_expr(e, x);
  return {r.re, r.im};
}

TangentialBlock TangentialBlock::identity(int tangential_dim) {
  TangentialBlock b(tangential_dim);
  for (int a = 0; a < tangential_dim; ++a)
    for (int c = a; c < tangential_dim; ++c) b.set(a, c, kr(a == c ? 1.0 : 0.0));
  return b;
}

BoundaryCoefficients BoundaryCoefficients::from_metric(const Chart& chart,
                                                       const TangentialBlock& g_lower,
                                                       const OneFormField& A,
                                                       const ScalarField& q) {
  BoundaryCoefficients bc;
  bc.n = chart.dim;
  bc.chart = chart;
  bc.g_lower = g_lower;
  bc.det_g = block_det(g_lower);
  bc.g_upper = block_inverse(g_lower, bc.det_g);
  bc.A = A;
  bc.q = q;
  validate_coefficients(bc);
  return bc;
}

BoundaryCoefficients BoundaryCoefficients::from_inverse_metric(const Chart& chart,
                                                               const TangentialBlock& g_upper,
                                                               const OneFormField& A,
                                                               const ScalarField& q) {
  BoundaryCoefficients bc;
  bc.n = chart.dim;
  bc.chart = chart;
  bc.g_upper = g_upper;
  Expr det_up = block_det(g_upper);
  bc.g_lower = block_inverse(g_upper, det_up);
  bc.det_g = sdiv(kr(1.0), det_up);
  bc.A = A;
  bc.q = q;
  validate_coefficients(bc);
  return bc;
}

ChartMetric BoundaryCoefficients::full_metric() const {
  ChartMetric m;
  m.chart = chart;
  const int nt = n - 1;
  for (int a = 0; a < nt; ++a)
    for (int b = a; b < nt; ++b) m.set(a, b, g_lower.at(a, b));
  for (int a = 0; a < nt; ++a) m.set(a, n - 1, kr(0.0));
  m.set(n - 1, n - 1, kr(1.0));
  return m;
}

std::complex<double> SymbolFunction::eval(const VecN<double>& x, const VecN<double>& xi) const {
  if (x.n != n || xi.n != n - 1)
    throw std::runtime_error("boundary: symbol argument dimension mismatch");
  double nrm = 0.0;
  for (int i = 0; i < xi.n; ++i) nrm += xi[i] * xi[i];
  if (nrm == 0.0) throw std::runtime_error("boundary: symbol evaluated at xi' = 0");
  std::complex<double> v = eval_symbol_value(f, pack_point(x, xi));
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
    throw std::runtime_error(
        "boundary: symbol evaluation is not finite (principal part not positive?)");
  return v;
}

std::complex<double> SymbolFunction::eval_boundary(const VecN<double>& xp,
                                                   const VecN<double>& xi) const {
  VecN<double> x(n);
  for (int i = 0; i < n - 1; ++i) x[i] = xp[i];
  x[n - 1] = 0.0;
  return eval(x, xi);
}

double homogeneity_defect(const SymbolFunction& s, const VecN<double>& x,
                          const VecN<double>& xi) {
  std::complex<double> base = s.eval(x, xi);
  double worst = 0.0;
  for (double t : {2.0, 0.5}) {
    VecN<double> sxi(xi.n);
    for (int i = 0; i < xi.n; ++i) sxi[i] = t * xi[i];
    std::complex<double> want = std::pow(t, s.level) * base;
    double defect = std::abs(s.eval(x, sxi) - want);
    worst = std::max(worst, defect / std::max(std::abs(want), 1e-300));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Gauge normalization.
// ---------------------------------------------------------------------------

ConjugationResult conjugation_h(const BoundaryCoefficients& bc, int quad_nodes) {
  validate_coefficients(bc);
  const int n = bc.n;
  const Expr& An = bc.A.comp[n - 1];
  if (contains_deriv(An))
    throw std::runtime_error("boundary: conjugation needs a closed-form normal component");
  if (quad_nodes < 4 || quad_nodes > 128)
    throw std::runtime_error("boundary: quadrature node count out of range");

  ConjugationResult out;
  Expr h;
  if (is_zero(An)) {
    h = kr(0.0);
  } else {
    // -int_0^{x_n} A_n(x', s) ds with s = t x_n: a fixed Gauss-Legendre sum,
    // so h is itself a closed expression in the chart coordinates.
    std::vector<double> t, w;
    gauss_legendre_01(quad_nodes, t, w);
    Expr acc = kr(0.0);
    for (int i = 0; i < quad_nodes; ++i) {
      Expr composed = subst_coord(An, n - 1, smul(kr(t[i]), coord(n - 1)));
      acc = sadd(acc, smul(kr(w[i]), composed));
    }
    h = sneg(smul(coord(n - 1), acc));
  }
  out.h = ScalarField{n, h};

  out.A_tilde.dim = n;
  for (int a = 0; a < n; ++a)
    out.A_tilde.comp[a] = is_zero(h) ? bc.A.comp[a] : sadd(bc.A.comp[a], deriv(h, a));

  // Sample |A~_n| over the chart box (four points per axis).
  const int per = 4;
  int total = 1;
  for (int a = 0; a < n; ++a) total *= per;
  for (int s = 0; s < total; ++s) {
    VecN<double> x(n);
    int rem = s;
    for (int a = 0; a < n; ++a) {
      int idx = rem % per;
      rem /= per;
      x[a] = bc.chart.lo[a] + (idx + 0.5) / per * (bc.chart.hi[a] - bc.chart.lo[a]);
    }
    out.an_defect = std::max(out.an_defect, std::abs(eval_plain(out.A_tilde.comp[n - 1], x)));
  }
  return out;
}

NormalGaugeResult normal_gauge(const BoundaryCoefficients& bc, int order) {
  validate_coefficients(bc);
  const int n = bc.n, nt = n - 1;
  if (order < 1 || order > 6)
    throw std::runtime_error("boundary: requested jet order exceeds what the coefficients provide");
  for (int a = 0; a < nt; ++a)
    for (int b = a; b < nt; ++b)
      if (contains_deriv(bc.g_lower.at(a, b)))
        throw std::runtime_error(
            "boundary: requested jet order exceeds what the coefficients provide");
  if (contains_deriv(bc.A.comp[n - 1]) || contains_deriv(bc.q.f))
    throw std::runtime_error("boundary: requested jet order exceeds what the coefficients provide");

  static const double fact[] = {1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0};

  // psi kills the normal jets of A_n: dn^{j+1} psi(x',0) = -dn^j A_n(x',0).
  Expr psi = kr(0.0);
  {
    Expr dj = bc.A.comp[n - 1];
    for (int j = 0; j < order; ++j) {
      Expr coeff = subst_coord(dj, n - 1, kr(0.0));
      psi = ssub(psi, smul(sdiv(coeff, kr(fact[j + 1])), pow_int(coord(n - 1), j + 1)));
      dj = diff_sym(dj, n - 1);
    }
  }

  // mu kills the second and higher normal jets of log det(g^ab).
  Expr logdet_up = sneg(log(bc.det_g));
  Expr mu = kr(0.0);
  {
    Expr dj = diff_sym_pow(logdet_up, n - 1, 2);
    for (int j = 2; j <= order; ++j) {
      Expr coeff = subst_coord(dj, n - 1, kr(0.0));
      mu = ssub(mu, smul(sdiv(coeff, kr(double(n - 1) * fact[j])), pow_int(coord(n - 1), j)));
      dj = diff_sym(dj, n - 1);
    }
  }
  Expr c = exp(mu);
  Expr cinv = exp(sneg(mu));

  NormalGaugeResult out;
  out.mu = ScalarField{n, mu};
  out.c = ScalarField{n, c};
  out.psi = ScalarField{n, psi};

  // Transformed coefficients: g~ = c^-1 g, A~ = A + d psi, q~ = c (q - q_c).
  BoundaryCoefficients tr;
  tr.n = n;
  tr.chart = bc.chart;
  tr.g_lower.nt = nt;
  tr.g_upper.nt = nt;
  for (int a = 0; a < nt; ++a)
    for (int b = a; b < nt; ++b) {
      tr.g_lower.set(a, b, smul(cinv, bc.g_lower.at(a, b)));
      tr.g_upper.set(a, b, smul(c, bc.g_upper.at(a, b)));
    }
  tr.det_g = smul(bc.det_g, exp(smul(kr(double(-nt)), mu)));
  tr.A.dim = n;
  for (int a = 0; a < n; ++a) tr.A.comp[a] = sadd(bc.A.comp[a], diff_sym(psi, a));

  // q_c = c^p Delta_g(c^-p) with p = (n-2)/4, Laplacian of the block metric.
  const double p = (n - 2) / 4.0;
  Expr cmp = exp(smul(kr(-p), mu));
  Expr sq = sqrt(bc.det_g);
  Expr lap = kr(0.0);
  for (int j = 0; j < n; ++j) {
    Expr flux = kr(0.0);
    for (int k = 0; k < n; ++k) {
      Expr up = (j < nt && k < nt) ? bc.g_upper.at(j, k)
                                   : kr(j == k ? 1.0 : 0.0);
      flux = sadd(flux, smul(up, diff_sym(cmp, k)));
    }
    lap = sadd(lap, diff_sym(smul(sq, flux), j));
  }
  lap = sdiv(lap, sq);
  Expr qc = smul(exp(smul(kr(p), mu)), lap);
  tr.q = ScalarField{n, smul(c, ssub(bc.q.f, qc))};
  validate_coefficients(tr);
  out.normalized = tr;

  // Verify both normalizations at boundary samples.
  for (const auto& x : boundary_samples(bc)) {
    Expr dj = tr.A.comp[n - 1];
    for (int j = 0; j < order; ++j) {
      out.an_jet_defect = std::max(out.an_jet_defect, std::abs(eval_plain(dj, x)));
      if (j + 1 < order) dj = diff_sym(dj, n - 1);
    }
    Expr trace = kr(0.0);
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b)
        trace = sadd(trace, smul(tr.g_lower.at(a, b), diff_sym(tr.g_upper.at(a, b), n - 1)));
    Expr tj = diff_sym(trace, n - 1);
    for (int j = 1; j < order; ++j) {
      out.det_jet_defect = std::max(out.det_jet_defect, std::abs(eval_plain(tj, x)));
      if (j + 1 < order) tj = diff_sym(tj, n - 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operator symbols and the recursion.
// ---------------------------------------------------------------------------

namespace {

// Shared construction for operator_symbols and the chain builder.
struct SymbolPieces {
  Expr q2, q1, e, zeroth, magnetic;  // magnetic = g^ab A_a xi_b
};

SymbolPieces build_pieces(const BoundaryCoefficients& bc) {
  const int n = bc.n, nt = n - 1;
  auto xi = [&](int a) { return coord(n + a); };

  SymbolPieces out;
  out.q2 = kr(0.0);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      out.q2 = sadd(out.q2, smul(bc.g_upper.at(a, b), smul(xi(a), xi(b))));

  Expr logdet = log(bc.det_g);
  out.q1 = kr(0.0);
  for (int b = 0; b < nt; ++b) {
    Expr inner = kr(0.0);
    for (int a = 0; a < nt; ++a) {
      inner = sadd(inner, smul(kr(0.5), smul(bc.g_upper.at(a, b), deriv(logdet, a))));
      inner = sadd(inner, deriv(bc.g_upper.at(a, b), a));
    }
    out.q1 = sadd(out.q1, smul(kc({0.0, -1.0}), smul(inner, xi(b))));
  }

  out.e = kr(0.0);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      out.e = sadd(out.e, smul(kr(0.5), smul(bc.g_lower.at(a, b), deriv(bc.g_upper.at(a, b), n - 1))));

  Expr sq = sqrt(bc.det_g);
  out.zeroth = bc.q.f;
  for (int a = 0; a < nt; ++a) {
    Expr flux = kr(0.0);
    for (int b = 0; b < nt; ++b) flux = sadd(flux, smul(bc.g_upper.at(a, b), bc.A.comp[b]));
    out.zeroth =
        sadd(out.zeroth, sdiv(smul(kc({0.0, -1.0}), deriv(smul(sq, flux), a)), sq));
  }
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      out.zeroth = sadd(out.zeroth, smul(bc.g_upper.at(a, b), smul(bc.A.comp[a], bc.A.comp[b])));

  out.magnetic = kr(0.0);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      out.magnetic = sadd(out.magnetic, smul(bc.g_upper.at(a, b), smul(bc.A.comp[a], xi(b))));
  return out;
}

void require_normal_gauge(const BoundaryCoefficients& bc) {
  const int n = bc.n;
  double scale = 0.0, defect = 0.0;
  for (const auto& x : boundary_samples(bc)) {
    for (int a = 0; a < n - 1; ++a) scale = std::max(scale, std::abs(eval_plain(bc.A.comp[a], x)));
    Expr dj = bc.A.comp[n - 1];
    for (int j = 0; j <= 2; ++j) {
      defect = std::max(defect, std::abs(eval_plain(dj, x)));
      dj = deriv(dj, n - 1);
    }
  }
  if (defect > 1e-7 * (1.0 + scale))
    throw std::runtime_error(
        "boundary: coefficients are not in the normal gauge (A_n does not vanish)");
}

struct SymbolChain {
  int n = 0;
  std::array<Expr, 4> b{};  // b[1 - level]
};

SymbolChain build_chain(const BoundaryCoefficients& bc, int lowest) {
  validate_coefficients(bc);
  require_normal_gauge(bc);
  const int n = bc.n, nt = n - 1;
  SymbolPieces pc = build_pieces(bc);

  SymbolChain ch;
  ch.n = n;
  ch.b[0] = sneg(sqrt(pc.q2));
  Expr inv2b1 = sdiv(kr(0.5), ch.b[0]);

  auto xi_deriv = [&](Expr e, const std::array<int, kTangentialCap>& K) {
    for (int a = 0; a < nt; ++a)
      for (int r = 0; r < K[a]; ++r) e = deriv(e, n + a);
    return e;
  };
  auto x_deriv = [&](Expr e, const std::array<int, kTangentialCap>& K) {
    for (int a = 0; a < nt; ++a)
      for (int r = 0; r < K[a]; ++r) e = deriv(e, a);
    return e;
  };

  // Homogeneity guard sample: chart-interior x, fixed xi.
  VecN<double> hx(n);
  for (int a = 0; a < n; ++a)
    hx[a] = bc.chart.lo[a] + (a == n - 1 ? 0.3 : 0.5) * (bc.chart.hi[a] - bc.chart.lo[a]);
  VecN<double> hxi(nt);
  const double xi_seed[] = {0.7, -0.4, 0.3};
  for (int a = 0; a < nt; ++a) hxi[a] = xi_seed[a];

  for (int m = 1; m - 1 >= lowest; --m) {
    const Expr& bm = ch.b[1 - m];
    Expr sum = kr(0.0);
    for (int j = m; j <= 1; ++j) {
      for (int k = m; k <= 1; ++k) {
        int d = j + k - m;
        if (d < 0) continue;
        for (const auto& K : multi_indices(nt, d)) {
          Expr left = xi_deriv(ch.b[1 - j], K);
          Expr right = x_deriv(ch.b[1 - k], K);
          Expr term = smul(smul(left, right), kc(neg_i_pow(d) / multi_factorial(K, nt)));
          sum = sadd(sum, term);
        }
      }
    }
    Expr extra = kr(0.0);
    if (m == 1) extra = sadd(pc.q1, smul(kr(2.0), pc.magnetic));
    if (m == 0) extra = pc.zeroth;
    Expr next = smul(inv2b1, sadd(ssub(smul(pc.e, bm), deriv(bm, n - 1)), ssub(extra, sum)));
    ch.b[1 - (m - 1)] = next;

    SymbolFunction probe{n, m - 1, next};
    std::complex<double> base = probe.eval(hx, hxi);
    for (double t : {2.0, 0.5}) {
      VecN<double> sxi(nt);
      for (int a = 0; a < nt; ++a) sxi[a] = t * hxi[a];
      std::complex<double> want = std::pow(t, m - 1) * base;
      if (std::abs(probe.eval(hx, sxi) - want) > 1e-8 * (std::abs(want) + 1.0))
        throw std::runtime_error("boundary: recursion output failed its homogeneity check");
    }
  }
  return ch;
}

}  // namespace

OperatorSymbols operator_symbols(const BoundaryCoefficients& bc) {
  validate_coefficients(bc);
  require_normal_gauge(bc);
  SymbolPieces pc = build_pieces(bc);
  OperatorSymbols out;
  out.n = bc.n;
  out.q2 = SymbolFunction{bc.n, 2, pc.q2};
  out.q1 = SymbolFunction{bc.n, 1, pc.q1};
  out.e = ScalarField{bc.n, pc.e};
  out.zeroth = ScalarField{bc.n, pc.zeroth};
  return out;
}

SymbolFunction symbol_b(const BoundaryCoefficients& bc, int level) {
  if (level > 1 || level < -2)
    throw std::runtime_error("boundary: symbol level must be in {1, 0, -1, -2}");
  SymbolChain ch = build_chain(bc, level);
  return SymbolFunction{bc.n, level, ch.b[1 - level]};
}

// ---------------------------------------------------------------------------
// Recovery.
// ---------------------------------------------------------------------------

namespace {

// Deterministic unit covector sweep (Euclidean; callers rescale to |.|_g = 1).
std::vector<Eigen::VectorXd> direction_sweep(int nt, int half) {
  std::vector<Eigen::VectorXd> dirs;
  if (nt == 2) {
    for (int k = 0; k < half; ++k) {
      double th = std::numbers::pi * (k + 0.37) / half;
      Eigen::VectorXd u(2);
      u << std::cos(th), std::sin(th);
      dirs.push_back(u);
    }
  } else {
    const double golden = 2.39996322972865332;  // 2 pi (1 - 1/phi)
    for (int k = 0; k < half; ++k) {
      double z = (k + 0.5) / half;  // hemisphere, avoids +-pairs
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double ph = golden * k;
      Eigen::VectorXd u(3);
      u << r * std::cos(ph), r * std::sin(ph), z;
      dirs.push_back(u);
    }
  }
  return dirs;
}

struct DirectionFit {
  Eigen::MatrixXcd quad;  // symmetric matrix from the even part
  Eigen::VectorXcd lin;   // covector coefficients from the odd part
};

// Least-squares split of f(omega) = sum_ab Q_ab w_a w_b + sum_a L_a w_a using
// evaluations at +-omega over the direction set.
DirectionFit fit_even_odd(const std::vector<Eigen::VectorXd>& omegas,
                          const std::vector<std::complex<double>>& plus,
                          const std::vector<std::complex<double>>& minus,
                          double cond_limit) {
  const int nt = int(omegas.front().size());
  const int nd = int(omegas.size());
  const int nq = nt * (nt + 1) / 2;
  Eigen::MatrixXd Phi(nd, nq), Lin(nd, nt);
  Eigen::VectorXcd ev(nd), od(nd);
  for (int d = 0; d < nd; ++d) {
    int col = 0;
    for (int a = 0; a < nt; ++a)
      for (int b = a; b < nt; ++b)
        Phi(d, col++) = omegas[d](a) * omegas[d](b) * (a == b ? 1.0 : 2.0);
    for (int a = 0; a < nt; ++a) Lin(d, a) = omegas[d](a);
    ev(d) = 0.5 * (plus[d] + minus[d]);
    od(d) = 0.5 * (plus[d] - minus[d]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > cond_limit)
    throw std::runtime_error("boundary: direction sweep is rank-deficient for the quadratic fit");
  Eigen::VectorXd qr = svd.solve(ev.real().eval());
  Eigen::VectorXd qi = svd.solve(ev.imag().eval());
  Eigen::JacobiSVD<Eigen::MatrixXd> svdl(Lin, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd lr = svdl.solve(od.real().eval());
  Eigen::VectorXd li = svdl.solve(od.imag().eval());

  DirectionFit out;
  out.quad = Eigen::MatrixXcd::Zero(nt, nt);
  int col = 0;
  for (int a = 0; a < nt; ++a)
    for (int b = a; b < nt; ++b) {
      std::complex<double> v(qr(col), qi(col));
      out.quad(a, b) = v;
      out.quad(b, a) = v;
      ++col;
    }
  out.lin = Eigen::VectorXcd(nt);
  for (int a = 0; a < nt; ++a) out.lin(a) = std::complex<double>(lr(a), li(a));
  return out;
}

struct PointRecovery {
  Eigen::MatrixXd gup, glow;
  std::vector<Eigen::MatrixXd> dgup;  // tangential derivatives of g^ab
  Eigen::MatrixXd k, dng;
  Eigen::VectorXcd At;
};

struct SymbolDerivs {
  std::array<Expr, kTangentialCap> dxi{}, dx{};
};

// First black-box stage: metric, its tangential derivatives, the mean
// curvature combination k, and the tangential potential, all at one boundary
// point.
PointRecovery recover_point(const SymbolFunction& b1, const SymbolFunction& b0,
                            const SymbolDerivs& jb1, const VecN<double>& xp, int n,
                            const std::vector<Eigen::VectorXd>& sweep, double cond_limit) {
  const int nt = n - 1;
  VecN<double> x(n);
  for (int a = 0; a < nt; ++a) x[a] = xp[a];
  x[n - 1] = 0.0;

  auto b1_at = [&](const VecN<double>& xi) { return b1.eval(x, xi); };
  auto q2_at = [&](const VecN<double>& xi) {
    std::complex<double> v = b1_at(xi);
    return (v * v).real();
  };
  auto dq2_at = [&](int g, const VecN<double>& xi) {
    std::complex<double> v = b1_at(xi);
    std::complex<double> dv = eval_symbol_value(jb1.dx[g], pack_point(x, xi));
    return (2.0 * v * dv).real();
  };

  PointRecovery out;
  out.gup = Eigen::MatrixXd::Zero(nt, nt);
  out.dgup.assign(nt, Eigen::MatrixXd::Zero(nt, nt));
  auto basis = [&](int a) {
    VecN<double> e(nt);
    e[a] = 1.0;
    return e;
  };
  for (int a = 0; a < nt; ++a) {
    out.gup(a, a) = q2_at(basis(a));
    for (int g = 0; g < nt; ++g) out.dgup[g](a, a) = dq2_at(g, basis(a));
  }
  for (int a = 0; a < nt; ++a)
    for (int b = a + 1; b < nt; ++b) {
      VecN<double> e = basis(a);
      e[b] = 1.0;
      out.gup(a, b) = out.gup(b, a) = 0.5 * (q2_at(e) - out.gup(a, a) - out.gup(b, b));
      for (int g = 0; g < nt; ++g)
        out.dgup[g](a, b) = out.dgup[g](b, a) =
            0.5 * (dq2_at(g, e) - out.dgup[g](a, a) - out.dgup[g](b, b));
    }
  out.glow = out.gup.inverse();

  // d_a log|g| = -tr(g_low d_a g^up)
  Eigen::VectorXd dlogdet(nt);
  for (int g = 0; g < nt; ++g) dlogdet(g) = -(out.glow * out.dgup[g]).trace();

  // Unit directions in the recovered metric, then the even/odd split of
  // s = b0 - (q1 - grad_xi b1 . D_x b1) / (2 b1).
  std::vector<Eigen::VectorXd> omegas;
  for (const auto& u : sweep) {
    double nrm = std::sqrt(u.dot(out.gup * u));
    omegas.push_back(u / nrm);
  }
  auto s_at = [&](const Eigen::VectorXd& om) {
    VecN<double> xi(nt);
    for (int a = 0; a < nt; ++a) xi[a] = om(a);
    SymbolVec p = pack_point(x, xi);
    std::complex<double> b1v = b1.eval(x, xi);
    std::complex<double> b0v = b0.eval(x, xi);
    std::complex<double> P = 0.0;
    for (int a = 0; a < nt; ++a)
      P += eval_symbol_value(jb1.dxi[a], p) * std::complex<double>(0.0, -1.0) *
           eval_symbol_value(jb1.dx[a], p);
    std::complex<double> q1v = 0.0;
    for (int b = 0; b < nt; ++b) {
      std::complex<double> inner = 0.0;
      for (int a = 0; a < nt; ++a)
        inner += 0.5 * out.gup(a, b) * dlogdet(a) + out.dgup[a](a, b);
      q1v += std::complex<double>(0.0, -1.0) * inner * om(b);
    }
    return b0v - (q1v - P) / (2.0 * b1v);
  };
  std::vector<std::complex<double>> plus, minus;
  for (const auto& om : omegas) {
    plus.push_back(s_at(om));
    minus.push_back(s_at(-om));
  }
  DirectionFit fit = fit_even_odd(omegas, plus, minus, cond_limit);

  // Even part is -(1/4) k^ab w_a w_b, odd part is -g^ab A_a w_b.
  out.k = (-4.0 * fit.quad).real();
  out.At = -(out.glow * fit.lin);
  double t = -(out.glow * out.k).trace() / double(n - 2);
  out.dng = out.k + t * out.gup;
  return out;
}

// Degree-four Lagrange basis over the five stencil nodes of one axis.
std::vector<Expr> lagrange_basis(int axis, double center, double h) {
  std::vector<double> nodes;
  for (int i = -2; i <= 2; ++i) nodes.push_back(center + i * h);
  std::vector<Expr> out;
  for (size_t i = 0; i < nodes.size(); ++i) {
    Expr num = kr(1.0);
    double den = 1.0;
    for (size_t j = 0; j < nodes.size(); ++j) {
      if (j == i) continue;
      num = smul(num, ssub(coord(axis), kr(nodes[j])));
      den *= nodes[i] - nodes[j];
    }
    out.push_back(smul(num, kr(1.0 / den)));
  }
  return out;
}

}  // namespace

RecoveredJets recover(const SymbolFunction& b1, const SymbolFunction& b0,
                      const SymbolFunction& bm1, const VecN<double>& xp,
                      const RecoverOptions& opt) {
  const int n = b1.n, nt = n - 1;
  if (b1.level != 1 || b0.level != 0 || bm1.level != -1)
    throw std::runtime_error("boundary: recovery expects symbols of levels 1, 0, -1");
  if (b0.n != n || bm1.n != n || xp.n != nt)
    throw std::runtime_error("boundary: recovery dimension mismatch");

  SymbolDerivs jb1;
  for (int a = 0; a < nt; ++a) {
    jb1.dxi[a] = deriv(b1.f, n + a);
    jb1.dx[a] = deriv(b1.f, a);
  }
  int half = (opt.directions > 0 ? opt.directions : 4 * nt * nt) / 2;
  half = std::max(half, nt * (nt + 1) / 2 + 1);
  std::vector<Eigen::VectorXd> sweep = direction_sweep(nt, half);

  // Stage one on the 5^(n-1) patch grid around xp.
  const double h = opt.patch_h;
  int grid = 1;
  for (int a = 0; a < nt; ++a) grid *= 5;
  std::vector<PointRecovery> pr(grid);
  for (int s = 0; s < grid; ++s) {
    VecN<double> xq(nt);
    int rem = s;
    for (int a = 0; a < nt; ++a) {
      xq[a] = xp[a] + (rem % 5 - 2) * h;
      rem /= 5;
    }
    pr[s] = recover_point(b1, b0, jb1, xq, n, sweep, opt.cond_limit);
  }
  const int center = grid / 2;  // all middle indices

  // Model coefficients interpolated from the recovered patch fields. Its
  // inverse metric is affine in x_n, its potential vanishes, and its
  // tangential one-form is constant in x_n, so every second-order unknown of
  // the true coefficients is zero in the model.
  std::vector<std::vector<Expr>> basis(nt);
  for (int a = 0; a < nt; ++a) basis[a] = lagrange_basis(a, xp[a], h);
  auto interp = [&](const std::function<std::complex<double>(int)>& value) {
    Expr acc = kr(0.0);
    for (int s = 0; s < grid; ++s) {
      Expr cell = kc(value(s));
      int rem = s;
      for (int a = 0; a < nt; ++a) {
        cell = smul(cell, basis[a][rem % 5]);
        rem /= 5;
      }
      acc = sadd(acc, cell);
    }
    return acc;
  };

  TangentialBlock model_up(nt);
  for (int a = 0; a < nt; ++a)
    for (int b = a; b < nt; ++b) {
      Expr base = interp([&](int s) { return std::complex<double>(pr[s].gup(a, b), 0.0); });
      Expr slope = interp([&](int s) { return std::complex<double>(pr[s].dng(a, b), 0.0); });
      model_up.set(a, b, sadd(base, smul(coord(n - 1), slope)));
    }
  OneFormField model_A;
  model_A.dim = n;
  for (int a = 0; a < nt; ++a)
    model_A.comp[a] = interp([&](int s) { return pr[s].At(a); });
  model_A.comp[n - 1] = kr(0.0);

  Chart model_chart;
  model_chart.dim = n;
  for (int a = 0; a < nt; ++a) {
    model_chart.lo[a] = xp[a] - 2.5 * h;
    model_chart.hi[a] = xp[a] + 2.5 * h;
  }
  model_chart.lo[n - 1] = 0.0;
  model_chart.hi[n - 1] = 4.0 * h;

  BoundaryCoefficients model = BoundaryCoefficients::from_inverse_metric(
      model_chart, model_up, model_A, ScalarField{n, kr(0.0)});
  SymbolChain mch = build_chain(model, -1);
  const Expr& model_bm1 = mch.b[2];

  // Subtract the model symbol; what remains is affine in the second-order
  // unknowns: even part -(1/2) m^ab w_a w_b, odd part -(1/2) g^ab dnA_a w_b.
  const PointRecovery& ctr = pr[center];
  std::vector<Eigen::VectorXd> omegas;
  for (const auto& u : sweep) {
    double nrm = std::sqrt(u.dot(ctr.gup * u));
    omegas.push_back(u / nrm);
  }
  VecN<double> x0(n);
  for (int a = 0; a < nt; ++a) x0[a] = xp[a];
  x0[n - 1] = 0.0;
  auto r_at = [&](const Eigen::VectorXd& om) {
    VecN<double> xi(nt);
    for (int a = 0; a < nt; ++a) xi[a] = om(a);
    return bm1.eval(x0, xi) - eval_symbol_value(model_bm1, pack_point(x0, xi));
  };
  std::vector<std::complex<double>> plus, minus;
  for (const auto& om : omegas) {
    plus.push_back(r_at(om));
    minus.push_back(r_at(-om));
  }
  DirectionFit fit = fit_even_odd(omegas, plus, minus, opt.cond_limit);
  Eigen::MatrixXcd m = -2.0 * fit.quad;
  Eigen::VectorXcd dnA = -2.0 * (ctr.glow * fit.lin);

  // l^ab = m^ab + (1/4)(DG g^ab - tau dn g^ab), where DG restores the trace
  // content the normalized coefficients carry and tau = g_cd dn g^cd.
  double tau = (ctr.glow * ctr.dng).trace();
  double DG = (ctr.glow * ctr.dng * ctr.glow * ctr.dng).trace();
  Eigen::MatrixXcd l =
      m + 0.25 * (DG * ctr.gup - tau * ctr.dng).cast<std::complex<double>>();

  RecoveredJets out;
  out.nt = nt;
  out.g = ctr.gup;
  out.dn_g = ctr.dng;
  out.k = ctr.k;
  out.l = l;
  out.A = ctr.At;
  out.dn_A = dnA;
  return out;
}

RecoveredJets direct_jets(const BoundaryCoefficients& bc, const VecN<double>& xp) {
  validate_coefficients(bc);
  const int n = bc.n, nt = n - 1;
  if (xp.n != nt) throw std::runtime_error("boundary: boundary point dimension mismatch");
  VecN<double> x(n);
  for (int a = 0; a < nt; ++a) x[a] = xp[a];
  x[n - 1] = 0.0;

  Expr trace = kr(0.0);
  for (int c = 0; c < nt; ++c)
    for (int d = 0; d < nt; ++d)
      trace = sadd(trace, smul(bc.g_lower.at(c, d), deriv(bc.g_upper.at(c, d), n - 1)));

  RecoveredJets out;
  out.nt = nt;
  out.g = Eigen::MatrixXd(nt, nt);
  out.dn_g = Eigen::MatrixXd(nt, nt);
  out.k = Eigen::MatrixXd(nt, nt);
  out.l = Eigen::MatrixXcd(nt, nt);
  out.A = Eigen::VectorXcd(nt);
  out.dn_A = Eigen::VectorXcd(nt);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b) {
      const Expr& up = bc.g_upper.at(a, b);
      Expr kexpr = ssub(deriv(up, n - 1), smul(trace, up));
      Expr lexpr = sadd(smul(kr(0.25), deriv(kexpr, n - 1)), smul(bc.q.f, up));
      out.g(a, b) = eval_plain(up, x).real();
      out.dn_g(a, b) = eval_plain(deriv(up, n - 1), x).real();
      out.k(a, b) = eval_plain(kexpr, x).real();
      out.l(a, b) = eval_plain(lexpr, x);
    }
  for (int a = 0; a < nt; ++a) {
    out.A(a) = eval_plain(bc.A.comp[a], x);
    out.dn_A(a) = eval_plain(deriv(bc.A.comp[a], n - 1), x);
  }
  return out;
}

std::string jets_report(const RecoveredJets& got, const RecoveredJets& want) {
  auto rel = [](double num, double den) { return num / std::max(den, 1e-300); };
  auto mat_err = [&](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return rel((a - b).cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  };
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  double worst = 0.0;
  os << "{\"fields\":{";
  const char* names[] = {"g", "dn_g", "k", "l", "A", "dn_A"};
  double errs[6] = {
      mat_err(got.g.cast<std::complex<double>>(), want.g.cast<std::complex<double>>()),
      mat_err(got.dn_g.cast<std::complex<double>>(), want.dn_g.cast<std::complex<double>>()),
      mat_err(got.k.cast<std::complex<double>>(), want.k.cast<std::complex<double>>()),
      mat_err(got.l, want.l),
      rel((got.A - want.A).cwiseAbs().maxCoeff(), want.A.cwiseAbs().maxCoeff()),
      rel((got.dn_A - want.dn_A).cwiseAbs().maxCoeff(), want.dn_A.cwiseAbs().maxCoeff())};
  for (int i = 0; i < 6; ++i) {
    os << (i ? "," : "") << "\"" << names[i] << "\":{\"rel_err\":" << errs[i] << "}";
    worst = std::max(worst, errs[i]);
  }
  os << "},\"max_rel_err\":" << worst << "}";
  return os.str();
}

// ---------------------------------------------------------------------------
// Gauge identities.
// ---------------------------------------------------------------------------

namespace {

struct OperatorInput {
  int n = 0;
  Expr det;
  std::array<Expr, kJetMaxVars * kJetMaxVars> up{};
  const Expr& g(int j, int k) const { return up[j * kJetMaxVars + k]; }
};

OperatorInput block_input(const BoundaryCoefficients& bc) {
  OperatorInput m;
  m.n = bc.n;
  m.det = bc.det_g;
  const int nt = bc.n - 1;
  for (int j = 0; j < bc.n; ++j)
    for (int k = 0; k < bc.n; ++k)
      m.up[j * kJetMaxVars + k] =
          (j < nt && k < nt) ? bc.g_upper.at(j, k) : kr(j == k ? 1.0 : 0.0);
  return m;
}

// L u = -|g|^{-1/2} (d_j + i A_j)(|g|^{1/2} g^{jk} (d_k + i A_k) u) + q u.
Expr apply_operator(const OperatorInput& m, const std::array<Expr, kJetMaxVars>& A, const Expr& q,
                    const Expr& u) {
  Expr sq = sqrt(m.det);
  Expr acc = kr(0.0);
  const Expr iunit = kc({0.0, 1.0});
  for (int j = 0; j < m.n; ++j) {
    Expr flux = kr(0.0);
    for (int k = 0; k < m.n; ++k)
      flux = sadd(flux, smul(m.g(j, k), sadd(deriv(u, k), smul(iunit, smul(A[k], u)))));
    flux = smul(sq, flux);
    acc = sadd(acc, sadd(deriv(flux, j), smul(iunit, smul(A[j], flux))));
  }
  return sadd(sneg(sdiv(acc, sq)), smul(q, u));
}

}  // namespace

GaugeResiduals gauge_identity_residual(const BoundaryCoefficients& bc, const ScalarField& c,
                                       const ScalarField& psi, const ScalarField& u,
                                       const VecN<double>& x) {
  validate_coefficients(bc);
  if (!bc.chart.contains(x)) throw std::runtime_error("boundary: evaluation point outside chart");
  std::complex<double> cv = eval_plain(c.f, x);
  if (cv.real() <= 0.0 || std::abs(cv.imag()) > 1e-12 * (1.0 + std::abs(cv.real())))
    throw std::runtime_error("boundary: conformal factor must be positive");

  const int n = bc.n;
  OperatorInput base = block_input(bc);
  std::array<Expr, kJetMaxVars> A{};
  for (int j = 0; j < n; ++j) A[j] = bc.A.comp[j];

  // Conformal identity.
  const double p = (n - 2) / 4.0;
  Expr logc = log(c.f);
  Expr cmp = exp(smul(kr(-p), logc));
  std::array<Expr, kJetMaxVars> zero{};
  for (int j = 0; j < n; ++j) zero[j] = kr(0.0);
  Expr qc = smul(exp(smul(kr(p), logc)), sneg(apply_operator(base, zero, kr(0.0), cmp)));

  Expr lhs_c = smul(exp(smul(kr((n + 2) / 4.0), logc)),
                    apply_operator(base, A, bc.q.f, smul(cmp, u.f)));
  OperatorInput scaled;
  scaled.n = n;
  scaled.det = smul(base.det, pow_int(c.f, -n));
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      scaled.up[j * kJetMaxVars + k] = smul(c.f, base.g(j, k));
  Expr rhs_c = apply_operator(scaled, A, smul(c.f, ssub(bc.q.f, qc)), u.f);

  // Gauge identity.
  const Expr iunit = kc({0.0, 1.0});
  Expr ei = exp(smul(iunit, psi.f));
  Expr emi = exp(smul(kc({0.0, -1.0}), psi.f));
  Expr lhs_g = smul(emi, apply_operator(base, A, bc.q.f, smul(ei, u.f)));
  std::array<Expr, kJetMaxVars> shifted{};
  for (int j = 0; j < n; ++j) shifted[j] = sadd(bc.A.comp[j], deriv(psi.f, j));
  Expr rhs_g = apply_operator(base, shifted, bc.q.f, u.f);

  std::complex<double> vlc = eval_plain(lhs_c, x), vrc = eval_plain(rhs_c, x);
  std::complex<double> vlg = eval_plain(lhs_g, x), vrg = eval_plain(rhs_g, x);
  GaugeResiduals out;
  out.conformal = std::abs(vlc - vrc);
  out.gauge = std::abs(vlg - vrg);
  out.scale = std::max({std::abs(vlc), std::abs(vrc), std::abs(vlg), std::abs(vrg)});
  return out;
}

std::complex<double> normal_derivative_biased(
    const std::function<std::complex<double>(double)>& f, double h) {
  // Five-point forward rule at the boundary, fourth order.
  static const double w[] = {-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25};
  std::complex<double> acc = 0.0;
  for (int i = 0; i < 5; ++i) acc += w[i] * f(i * h);
  return acc / h;
}

}  // namespace ck
