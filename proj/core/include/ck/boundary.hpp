// boundary.hpp - boundary-normal gauge normalization, the factorization
// symbol recursion for the boundary operator, and boundary-jet recovery.
//
// Everything here works in boundary normal coordinates: the chart is
// (x', x_n) with the boundary at x_n = 0 and the metric in exact block form
//     g = g_ab dx^a dx^b + dx_n (x) dx_n      (a, b tangential).
// Symbols live on the joint coordinates (x, xi'), which need more slots than
// the geometry jet rings allow; they get their own vector capacity and are
// differentiated through exact Deriv nodes, so the recursion never touches a
// finite-difference step. Recovery, by contrast, treats the symbols as black
// boxes: it only evaluates them (and their first jets) at boundary points,
// and reconstructs normal jets of the coefficients through direction fits
// plus subtraction of a synthesized model.

#pragma once

#include <array>
#include <complex>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "ck/expr.hpp"
#include "ck/geometry.hpp"

namespace ck {

// Joint (x, xi') coordinate block: n chart slots followed by n-1 covector
// slots. With kJetMaxVars = 4 this supports manifolds up to dimension 4.
inline constexpr int kSymbolVarsCap = 2 * kJetMaxVars - 1;
inline constexpr int kTangentialCap = kJetMaxVars - 1;

using SymbolVec = VecN<double, kSymbolVarsCap>;

// Evaluate an expression over the joint coordinate block.
std::complex<double> eval_symbol_value(const Expr& e, const SymbolVec& p);

// Symmetric (n-1)x(n-1) expression matrix; the entries may depend on all n
// chart coordinates. set() stores one expression for both index orders.
struct TangentialBlock {
  int nt = 0;
  std::array<Expr, kTangentialCap * kTangentialCap> comp{};

  explicit TangentialBlock(int tangential_dim = 0) : nt(tangential_dim) {}
  void set(int a, int b, Expr e) {
    comp[a * kTangentialCap + b] = e;
    comp[b * kTangentialCap + a] = std::move(e);
  }
  const Expr& at(int a, int b) const { return comp[a * kTangentialCap + b]; }

  static TangentialBlock identity(int tangential_dim);
};

// Coefficients (g, A, q) of the magnetic Schrodinger operator in boundary
// normal coordinates. Both the lower and upper tangential metric blocks are
// kept as expressions (one is derived from the other by exact adjugate
// algebra at construction), along with det(g_ab), which equals the full
// metric determinant because the normal block is the identity.
struct BoundaryCoefficients {
  int n = 0;            // manifold dimension, 3 <= n <= kJetMaxVars
  Chart chart;          // box in (x', x_n); chart.lo[n-1] must be 0
  TangentialBlock g_lower;  // g_ab
  TangentialBlock g_upper;  // g^ab
  OneFormField A;       // complex, n components
  ScalarField q;        // complex
  Expr det_g;           // det(g_ab)

  static BoundaryCoefficients from_metric(const Chart& chart, const TangentialBlock& g_lower,
                                          const OneFormField& A, const ScalarField& q);
  static BoundaryCoefficients from_inverse_metric(const Chart& chart,
                                                  const TangentialBlock& g_upper,
                                                  const OneFormField& A, const ScalarField& q);

  // Full n-dimensional block metric, for use with the chart geometry tools.
  ChartMetric full_metric() const;
};

// A symbol on the boundary cotangent bundle: an expression over (x, xi')
// together with its asserted homogeneity degree in xi'.
struct SymbolFunction {
  int n = 0;
  int level = 0;  // homogeneity degree in xi'
  Expr f;

  std::complex<double> eval(const VecN<double>& x, const VecN<double>& xi) const;
  // Convenience: evaluate on the boundary (x_n pinned to 0).
  std::complex<double> eval_boundary(const VecN<double>& xp, const VecN<double>& xi) const;
};

// Max over t in {2, 1/2} of |s(x, t xi) - t^level s(x, xi)| relative to
// |t^level s(x, xi)|. Homogeneity is exact by construction, so anything
// beyond rounding signals a corrupted symbol.
double homogeneity_defect(const SymbolFunction& s, const VecN<double>& x,
                          const VecN<double>& xi);

// --------------------------------------------------------------------------
// Gauge normalization.
// --------------------------------------------------------------------------

struct ConjugationResult {
  ScalarField h;         // h(x) = -int_0^{x_n} A_n(x', s) ds, as a closed quadrature sum
  OneFormField A_tilde;  // A + dh; the normal component vanishes identically
  double an_defect = 0;  // max |A~_n| sampled over the chart box
};

// Remove the normal component of A by the substitution A -> A + dh. The
// integral is a fixed Gauss-Legendre sum in the normal coordinate, so h is a
// genuine expression and every derivative of it stays consistent.
ConjugationResult conjugation_h(const BoundaryCoefficients& bc, int quad_nodes = 24);

struct NormalGaugeResult {
  ScalarField mu;   // log of the conformal factor; vanishes to first order at x_n = 0
  ScalarField c;    // conformal factor exp(mu)
  ScalarField psi;  // gauge phase, polynomial in x_n with x'-dependent coefficients
  BoundaryCoefficients normalized;  // (c^-1 g, A + d psi, c (q - q_c))
  double an_jet_defect = 0;   // max |dn^j A~_n(x',0)|, 0 <= j < order
  double det_jet_defect = 0;  // max |dn^j (g~_ab dn g~^ab)(x',0)|, 1 <= j < order
};

// Choose c = exp(mu) and psi so that, at x_n = 0, the normal jets of the
// transformed A_n vanish through the requested order and the normal jets of
// g~_ab dn g~^ab vanish from order one on. Inputs must be closed-form
// (Deriv-free) expressions; the transformed coefficients are again closed
// form, produced by structural differentiation.
NormalGaugeResult normal_gauge(const BoundaryCoefficients& bc, int order = 4);

// --------------------------------------------------------------------------
// Operator symbols and the factorization recursion.
// --------------------------------------------------------------------------

struct OperatorSymbols {
  int n = 0;
  SymbolFunction q2;  // g^ab xi_a xi_b                       (degree 2)
  SymbolFunction q1;  // -i((1/2) g^ab d_a log|g| + d_a g^ab) xi_b  (degree 1)
  ScalarField e;      // (1/2) g_ab dn g^ab
  ScalarField zeroth; // |g|^-1/2 D_a(|g|^1/2 g^ab A_b) + g^ab A_a A_b + q
};

// Requires the normal gauge: A_n must vanish (with its boundary jets).
OperatorSymbols operator_symbols(const BoundaryCoefficients& bc);

// Symbols b_level of the first-order factor, level in {1, 0, -1, -2}:
//   b_1 = -sqrt(q2), and each lower level comes from the one generic
//   recursion step (normal derivative, e-term, and the multi-index sum over
//   previously computed levels), with q1 + 2 g^ab A_a xi_b entering at
//   degree 1 and the zeroth-order coefficient at degree 0.
// Every output is checked against its asserted homogeneity before return.
SymbolFunction symbol_b(const BoundaryCoefficients& bc, int level);

// --------------------------------------------------------------------------
// Boundary-jet recovery from the symbols.
// --------------------------------------------------------------------------

struct RecoveredJets {
  int nt = 0;               // n - 1
  Eigen::MatrixXd g;        // g^ab at (x', 0)
  Eigen::MatrixXd dn_g;     // dn g^ab
  Eigen::MatrixXd k;        // dn g^ab - (g_cd dn g^cd) g^ab
  Eigen::MatrixXcd l;       // (1/4) dn k^ab + q g^ab
  Eigen::VectorXcd A;       // tangential A_a
  Eigen::VectorXcd dn_A;    // dn A_a
};

struct RecoverOptions {
  double patch_h = 0.015;   // tangential stencil spacing for the model patch
  int directions = 0;       // signed direction count; 0 picks 4 (n-1)^2
  double cond_limit = 1e8;  // direction-fit condition number guard
};

// Reconstruct the boundary jets at x' = xp from evaluations of the three
// leading symbols. Only boundary values and first jets of the symbols are
// used. The second-order content is isolated by subtracting the recursion
// output of a model coefficient set synthesized from the already-recovered
// fields on a small tangential patch.
RecoveredJets recover(const SymbolFunction& b1, const SymbolFunction& b0,
                      const SymbolFunction& bm1, const VecN<double>& xp,
                      const RecoverOptions& opt = {});

// Ground-truth jets read directly off a coefficient set, for comparisons.
// The l entries use the exact normal derivative of k (no gauge assumption).
RecoveredJets direct_jets(const BoundaryCoefficients& bc, const VecN<double>& xp);

// JSON comparison of two jet sets with per-field max relative errors.
std::string jets_report(const RecoveredJets& got, const RecoveredJets& want);

// --------------------------------------------------------------------------
// Gauge identities as pointwise operator checks.
// --------------------------------------------------------------------------

struct GaugeResiduals {
  double conformal = 0;  // |c^{(n+2)/4} L_{g,A,q}(c^{-(n-2)/4} u) - L_{c^-1 g, A, c(q-q_c)} u|
  double gauge = 0;      // |e^{-i psi} L_{g,A,q}(e^{i psi} u) - L_{g, A + d psi, q} u|
  double scale = 0;      // max |operator value| across the four evaluations
};

// Both identities are exact; the residuals measure only rounding and should
// sit at machine scale for smooth c > 0, psi, u.
GaugeResiduals gauge_identity_residual(const BoundaryCoefficients& bc, const ScalarField& c,
                                       const ScalarField& psi, const ScalarField& u,
                                       const VecN<double>& x);

// One-sided derivative at x_n = 0 from interior samples (five-point rule,
// fourth order). For quantities that only exist on x_n >= 0 and cannot be
// differentiated through a closed form.
std::complex<double> normal_derivative_biased(
    const std::function<std::complex<double>(double)>& f, double h = 0.01);

}  // namespace ck
