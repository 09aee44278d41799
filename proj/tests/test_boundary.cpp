#include <doctest.h>

#include <cmath>
#include <complex>

#include "ck/boundary.hpp"
#include "ck/scenario.hpp"

using namespace ck;
using Cd = std::complex<double>;
using Eigen::MatrixXcd;

namespace {

const Expr X1 = coord(0);
const Expr X2 = coord(1);
const Expr XN = coord(2);

Chart box3(double t, double n) { return Chart::box(3, {-t, -t, 0.0}, {t, t, n}); }

// Flat half-space with a constant potential and a mildly varying covector field.
BoundaryCoefficients flat_bc() {
  TangentialBlock id = TangentialBlock::identity(2);
  OneFormField A = OneFormField::zero(3);
  A.comp[0] = 0.3 * X2 + kc({0.0, 0.2}) * XN;
  A.comp[2] = 0.25 * X1;
  ScalarField q{3, kc({0.2, 0.1}) + 0.3 * X1};
  return BoundaryCoefficients::from_inverse_metric(box3(0.8, 0.8), id, A, q);
}

// Shared curved fixture. Inverse-metric data with genuine normal dependence.
BoundaryCoefficients oracle_fixture() {
  TangentialBlock up(2);
  up.set(0, 0, exp(0.3 * X1 + 0.2 * XN));
  up.set(0, 1, 0.15 * sin(X1 + X2) + 0.05 * XN);
  up.set(1, 1, 1.0 + 0.25 * X2 * X2 + 0.1 * X1 * XN);
  OneFormField A = OneFormField::zero(3);
  A.comp[0] = kc({0.2, 0.1}) + 0.3 * X2;
  A.comp[1] = kc({-0.1, 0.0}) + 0.2 * X1 * XN;
  ScalarField q{3, kc({0.3, 0.2}) + 0.1 * X1 - 0.05 * X2 * XN};
  return BoundaryCoefficients::from_inverse_metric(box3(1.0, 1.0), up, A, q);
}

template <class M>
double relm(const M& got, const M& want) {
  double s = std::max(1.0, double(want.cwiseAbs().maxCoeff()));
  return (got - want).cwiseAbs().maxCoeff() / s;
}

}  // namespace

TEST_CASE("symbols of the flat model operator") {
  TangentialBlock id = TangentialBlock::identity(2);
  OneFormField A0 = OneFormField::zero(3);
  Cd q0(0.25, -0.1);
  ScalarField q{3, kc({q0.real(), q0.imag()})};
  auto bc = BoundaryCoefficients::from_inverse_metric(box3(0.8, 0.8), id, A0, q);
  auto sym = operator_symbols(bc);

  VecN<double> x{0.1, -0.2, 0.3};
  std::vector<std::pair<double, double>> xis{{0.7, -0.4}, {1.0, 0.0}, {-0.3, 1.1}};
  for (auto [u, v] : xis) {
    VecN<double> xi{u, v};
    double nx = std::sqrt(u * u + v * v);
    CHECK(std::abs(sym.q2.eval(x, xi) - Cd(nx * nx, 0.0)) < 1e-14);
    CHECK(std::abs(sym.q1.eval(x, xi)) < 1e-14);
    CHECK(std::abs(eval_value(sym.e.f, x)) < 1e-14);
    CHECK(std::abs(eval_value(sym.zeroth.f, x) - q0) < 1e-14);

    CHECK(std::abs(symbol_b(bc, 1).eval(x, xi) - Cd(-nx, 0.0)) < 1e-13);
    CHECK(std::abs(symbol_b(bc, 0).eval(x, xi)) < 1e-13);
    CHECK(std::abs(symbol_b(bc, -1).eval(x, xi) - (-q0 / (2.0 * nx))) < 1e-13);
    CHECK(std::abs(symbol_b(bc, -2).eval(x, xi)) < 1e-12);
  }

  // Flat direct jets: vanishing curvature data, l = q0 * I.
  auto dj = direct_jets(bc, VecN<double>{0.1, -0.2});
  CHECK(dj.k.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((dj.l - q0 * MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("symbol recursion against independently computed values") {
  // Expected values computed symbolically with a computer algebra system
  // (tests/oracles/boundary_symbols_oracle.py) and frozen here.
  auto bc = oracle_fixture();
  auto sym = operator_symbols(bc);
  VecN<double> x{0.2, -0.3, 0.15};
  VecN<double> xi{0.7, -0.4};

  auto rel = [](Cd got, Cd want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };

  CHECK(rel(sym.q2.eval(x, xi), Cd(0.70441140601388664, 0.0)) < 1e-12);
  CHECK(rel(sym.q1.eval(x, xi), Cd(0.0, -0.18284985479784112)) < 1e-10);
  CHECK(rel(eval_value(sym.e.f, x), Cd(0.11008991153018945, 0.0)) < 1e-10);
  CHECK(rel(eval_value(sym.zeroth.f, x), Cd(0.45388817610627935, 0.23192244827763112)) < 1e-10);

  CHECK(rel(symbol_b(bc, 1).eval(x, xi), Cd(-0.83929220538134789, 0.0)) < 1e-8);
  CHECK(rel(symbol_b(bc, 0).eval(x, xi), Cd(0.10905730895905790, 0.056944260614859138)) < 1e-7);
  CHECK(rel(symbol_b(bc, -1).eval(x, xi), Cd(-0.27109854677651622, -0.035729531873555076)) < 1e-7);
  CHECK(rel(symbol_b(bc, -2).eval(x, xi), Cd(-0.037369494151048400, -0.10010045939199628)) < 1e-7);
}

TEST_CASE("symbols are homogeneous of their stated degree") {
  auto bc = oracle_fixture();
  VecN<double> x{0.2, -0.3, 0.15};
  VecN<double> xi{0.7, -0.4};
  for (int level : {1, 0, -1, -2}) {
    auto b = symbol_b(bc, level);
    CHECK(homogeneity_defect(b, x, xi) < 1e-10);
  }
  CHECK_THROWS(symbol_b(bc, 1).eval_boundary(VecN<double>{0.2, -0.3}, VecN<double>{0.0, 0.0}));
}

TEST_CASE("normal component of the potential conjugates away") {
  auto mk = [](Expr an) {
    TangentialBlock id = TangentialBlock::identity(2);
    OneFormField A = OneFormField::zero(3);
    A.comp[2] = std::move(an);
    ScalarField q{3, kr(0.0)};
    return BoundaryCoefficients::from_inverse_metric(box3(0.8, 0.8), id, A, q);
  };

  auto t0 = conjugation_h(mk(kr(0.0)));
  CHECK(t0.an_defect < 1e-14);
  VecN<double> x0{0.1, 0.2, 0.3};
  CHECK(std::abs(eval_value(t0.h.f, x0)) < 1e-13);

  // Constant A_n = 1: h = -x_n.
  auto t1 = conjugation_h(mk(kr(1.0)));
  CHECK(t1.an_defect < 1e-13);
  CHECK(std::abs(eval_value(t1.h.f, x0) - (-0.3)) < 1e-12);

  // A_n = x_n (0.7 + 0.3 x_1): h = -(x_n^2/2)(0.7 + 0.3 x_1), and the
  // tangential component picks up the x_1 derivative of h.
  auto t2 = conjugation_h(mk(XN * (0.7 + 0.3 * X1)));
  CHECK(t2.an_defect < 1e-11);
  VecN<double> xa{0.2, -0.1, 0.4};
  double want_h = -(0.4 * 0.4 / 2.0) * (0.7 + 0.3 * 0.2);
  CHECK(std::abs(eval_value(t2.h.f, xa) - want_h) < 1e-10);
  VecN<double> xb{0.5, -0.1, 0.15};
  Cd a1 = eval_value(t2.A_tilde.comp[0], xb);
  CHECK(std::abs(a1 - Cd(-0.3 * 0.15 * 0.15 / 2.0, 0.0)) < 1e-10);
}

TEST_CASE("normal gauge normalization") {
  TangentialBlock low(2);
  low.set(0, 0, 1.0 + 0.2 * X1 + 0.1 * XN);
  low.set(0, 1, 0.1 * X2);
  low.set(1, 1, 1.0 + 0.15 * XN * XN);
  OneFormField A = OneFormField::zero(3);
  A.comp[0] = 0.2 * X2;
  A.comp[2] = kc({0.3, 0.0}) + 0.2 * XN - 0.1 * X1 + kc({0.0, 0.05}) * X2;
  ScalarField q{3, kc({0.1, -0.2}) + 0.05 * X2};
  auto bc = BoundaryCoefficients::from_metric(box3(0.7, 0.6), low, A, q);

  CHECK_THROWS(operator_symbols(bc));  // A_n != 0: not yet normalized

  auto ng = normal_gauge(bc, 4);
  CHECK(ng.an_jet_defect < 1e-8);
  CHECK(ng.det_jet_defect < 1e-7);

  // The gauge data vanishes at the boundary and the full metric keeps the
  // exact block normal form.
  VecN<double> xp{0.2, -0.1, 0.0};
  CHECK(std::abs(eval_value(ng.mu.f, xp)) < 1e-12);
  CHECK(std::abs(eval_value(ng.psi.f, xp)) < 1e-12);
  CHECK(std::abs(eval_value(ng.c.f, xp) - 1.0) < 1e-12);
  auto full = ng.normalized.full_metric();
  VecN<double> xin{0.1, -0.2, 0.25};
  CHECK(std::abs(eval_value(full.at(2, 2), xin) - 1.0) < 1e-12);
  CHECK(std::abs(eval_value(full.at(0, 2), xin)) < 1e-12);

  // Normalized coefficients feed the recursion without complaint.
  auto sym = operator_symbols(ng.normalized);
  VecN<double> xi{0.6, 0.3};
  CHECK(std::isfinite(sym.q2.eval(xp, xi).real()));

  // The produced pair satisfies the conjugation identities.
  ScalarField u{3, exp(0.2 * X1) * sin(X2 + 0.5 * XN) + kc({0.0, 0.6}) * cos(X1 * XN)};
  auto gr = gauge_identity_residual(bc, ng.c, ng.psi, u, xin);
  CHECK(gr.conformal < 1e-10 * gr.scale);
  CHECK(gr.gauge < 1e-10 * gr.scale);

  CHECK_THROWS(normal_gauge(bc, 7));
}

TEST_CASE("conformal and gauge identities at sample points") {
  ScalarField cf{3, 1.0 + 0.3 * X1 * X1 + 0.1 * X2 * XN};
  ScalarField psif{3, 0.4 * X1 * X2 - 0.2 * XN + kc({0.0, 0.05}) * X2};
  ScalarField uf{3, exp(0.2 * X1) * sin(X2) + kc({0.0, 0.6}) * cos(XN * X1) + 0.3};

  auto flat = flat_bc();
  auto curved = oracle_fixture();
  double worst_flat = 0.0, worst_curved = 0.0;
  for (int i = 0; i < 20; ++i) {
    double s = (i + 0.5) / 20.0;
    VecN<double> x{0.6 * std::cos(5.0 * s) * s, 0.6 * std::sin(3.0 + 4.0 * s) * s, 0.5 * s};
    auto gf = gauge_identity_residual(flat, cf, psif, uf, x);
    worst_flat = std::max(worst_flat, std::max(gf.conformal, gf.gauge) / gf.scale);
    auto gc = gauge_identity_residual(curved, cf, psif, uf, x);
    worst_curved = std::max(worst_curved, std::max(gc.conformal, gc.gauge) / gc.scale);
  }
  CHECK(worst_flat < 1e-6);
  CHECK(worst_curved < 1e-5);

  // Trivial pair: identities reduce to exact operator equality.
  ScalarField one{3, kr(1.0)}, zero{3, kr(0.0)};
  auto gt = gauge_identity_residual(curved, one, zero, uf, VecN<double>{0.2, 0.1, 0.3});
  CHECK(gt.conformal < 1e-13 * gt.scale);
  CHECK(gt.gauge < 1e-13 * gt.scale);
}

TEST_CASE("boundary jets recovered from the symbol ladder") {
  auto bc = curved_block_coefficients();
  VecN<double> xp{0.1, -0.15};
  auto want = direct_jets(bc, xp);
  auto got = recover(symbol_b(bc, 1), symbol_b(bc, 0), symbol_b(bc, -1), xp);
  CHECK(relm(got.g, want.g) < 1e-6);
  CHECK(relm(got.dn_g, want.dn_g) < 1e-6);
  CHECK(relm(got.k, want.k) < 1e-6);
  CHECK(relm(got.l, want.l) < 1e-6);
  CHECK(relm(got.A, want.A) < 1e-6);
  CHECK(relm(got.dn_A, want.dn_A) < 1e-6);
  CHECK(jets_report(got, want).find("\"g\"") != std::string::npos);

  RecoverOptions strict;
  strict.cond_limit = 1.0;
  CHECK_THROWS(recover(symbol_b(bc, 1), symbol_b(bc, 0), symbol_b(bc, -1), xp, strict));
}

TEST_CASE("recovery separates covector and potential shifts") {
  auto base = curved_block_coefficients();
  VecN<double> xp{0.05, -0.1};
  auto j0 = recover(symbol_b(base, 1), symbol_b(base, 0), symbol_b(base, -1), xp);

  // Shift the tangential covector by a constant: A moves by exactly that
  // constant while the metric jets stay put.
  Cd w1(0.12, -0.05), w2(-0.08, 0.03);
  auto shifted = base;
  shifted.A.comp[0] = shifted.A.comp[0] + kc({w1.real(), w1.imag()});
  shifted.A.comp[1] = shifted.A.comp[1] + kc({w2.real(), w2.imag()});
  auto j1 = recover(symbol_b(shifted, 1), symbol_b(shifted, 0), symbol_b(shifted, -1), xp);
  CHECK(std::abs((j1.A[0] - j0.A[0]) - w1) < 1e-7);
  CHECK(std::abs((j1.A[1] - j0.A[1]) - w2) < 1e-7);
  CHECK(relm(j1.g, j0.g) < 1e-8);
  CHECK(relm(j1.dn_g, j0.dn_g) < 1e-7);

  // Shift the potential by a constant: l moves by dq * g^ab, A stays.
  Cd dq(0.3, -0.2);
  auto qshift = base;
  qshift.q.f = qshift.q.f + kc({dq.real(), dq.imag()});
  auto j2 = recover(symbol_b(qshift, 1), symbol_b(qshift, 0), symbol_b(qshift, -1), xp);
  MatrixXcd dl = j2.l - j0.l;
  MatrixXcd want = dq * j0.g.cast<Cd>();
  CHECK(double((dl - want).cwiseAbs().maxCoeff()) < 1e-5);
  CHECK(double((j2.A - j0.A).cwiseAbs().maxCoeff()) < 1e-6);
  CHECK(relm(j2.k, j0.k) < 1e-6);
}

TEST_CASE("input validation") {
  TangentialBlock bad(2);
  bad.set(0, 0, kr(1.0));
  bad.set(0, 1, kr(0.0));
  bad.set(1, 1, kr(-1.0));  // indefinite
  OneFormField A0 = OneFormField::zero(3);
  ScalarField q0{3, kr(0.0)};
  CHECK_THROWS(BoundaryCoefficients::from_metric(box3(0.5, 0.5), bad, A0, q0));

  CHECK_THROWS(symbol_b(flat_bc(), -3));

  // Biased one-sided differentiation used at the boundary face.
  auto f = [](double t) { return std::exp(0.3 * t) * Cd(1.0, 2.0); };
  Cd d = normal_derivative_biased(f);
  CHECK(std::abs(d - 0.3 * Cd(1.0, 2.0)) < 1e-8);
}
