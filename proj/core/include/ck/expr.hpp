// expr.hpp - closed analytic expression trees for chart fields.
//
// Metrics, weights, amplitudes and coefficients are all built from this small
// node set. Evaluation is templated on the scalar ring, which is what lets the
// same field definition produce values, jets, and nested derivatives (a Deriv
// node evaluates its child on Dual<R> and reads off the derivative part).
// There is deliberately no runtime parser; scenario files select named
// builders that construct trees in code.

#pragma once

#include <complex>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "ck/linalg.hpp"
#include "ck/rings.hpp"

namespace ck {

enum class ExprOp {
  Const, Coord,
  Add, Sub, Mul, Div, Neg,
  Exp, Log, Sqrt, Sin, Cos, Tanh, Atan,
  Atan2, PowInt,
  Deriv,  // d(child)/d(coord k), evaluated with a nested dual ring
};

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op;
  std::complex<double> c{};  // Const payload
  int k = 0;                 // Coord index, PowInt exponent, Deriv direction
  Expr a, b;
};

inline Expr make_node(ExprOp op, Expr a = nullptr, Expr b = nullptr, int k = 0,
                      std::complex<double> c = {}) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->c = c;
  n->k = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline Expr kc(std::complex<double> v) { return make_node(ExprOp::Const, nullptr, nullptr, 0, v); }
inline Expr kr(double v) { return kc(std::complex<double>(v, 0.0)); }
inline Expr coord(int i) { return make_node(ExprOp::Coord, nullptr, nullptr, i); }

inline Expr operator+(Expr a, Expr b) { return make_node(ExprOp::Add, std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return make_node(ExprOp::Sub, std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return make_node(ExprOp::Mul, std::move(a), std::move(b)); }
inline Expr operator/(Expr a, Expr b) { return make_node(ExprOp::Div, std::move(a), std::move(b)); }
inline Expr operator-(Expr a) { return make_node(ExprOp::Neg, std::move(a)); }
inline Expr operator+(Expr a, double b) { return std::move(a) + kr(b); }
inline Expr operator+(double a, Expr b) { return kr(a) + std::move(b); }
inline Expr operator-(Expr a, double b) { return std::move(a) - kr(b); }
inline Expr operator-(double a, Expr b) { return kr(a) - std::move(b); }
inline Expr operator*(Expr a, double b) { return std::move(a) * kr(b); }
inline Expr operator*(double a, Expr b) { return kr(a) * std::move(b); }
inline Expr operator/(Expr a, double b) { return std::move(a) / kr(b); }
inline Expr operator/(double a, Expr b) { return kr(a) / std::move(b); }

inline Expr exp(Expr a) { return make_node(ExprOp::Exp, std::move(a)); }
inline Expr log(Expr a) { return make_node(ExprOp::Log, std::move(a)); }
inline Expr sqrt(Expr a) { return make_node(ExprOp::Sqrt, std::move(a)); }
inline Expr sin(Expr a) { return make_node(ExprOp::Sin, std::move(a)); }
inline Expr cos(Expr a) { return make_node(ExprOp::Cos, std::move(a)); }
inline Expr tanh(Expr a) { return make_node(ExprOp::Tanh, std::move(a)); }
inline Expr atan(Expr a) { return make_node(ExprOp::Atan, std::move(a)); }
inline Expr atan2(Expr y, Expr x) { return make_node(ExprOp::Atan2, std::move(y), std::move(x)); }
inline Expr pow_int(Expr a, int k) { return make_node(ExprOp::PowInt, std::move(a), nullptr, k); }

// Exact partial derivative of a subexpression. Nesting these is how fields
// like |grad(phi)|^2 stay differentiable to any order the caller asks for.
inline Expr deriv(Expr a, int dir) { return make_node(ExprOp::Deriv, std::move(a), nullptr, dir); }

// --------------------------------------------------------------------------
// Evaluation over a real ring R (coordinates are Cpx<R> with zero imaginary
// part unless the caller is doing something deliberately complex).
// --------------------------------------------------------------------------

template <class R, int Cap = kJetMaxVars>
Cpx<R> eval_expr(const ExprNode& node, const VecN<Cpx<R>, Cap>& x) {
  switch (node.op) {
    case ExprOp::Const: {
      Cpx<R> r;
      r.re = R(node.c.real());
      r.im = R(node.c.imag());
      return r;
    }
    case ExprOp::Coord:
      if (node.k >= x.n) throw std::runtime_error("expr: coordinate index out of range");
      return x[node.k];
    case ExprOp::Add: return eval_expr<R>(*node.a, x) + eval_expr<R>(*node.b, x);
    case ExprOp::Sub: return eval_expr<R>(*node.a, x) - eval_expr<R>(*node.b, x);
    case ExprOp::Mul: return eval_expr<R>(*node.a, x) * eval_expr<R>(*node.b, x);
    case ExprOp::Div: return eval_expr<R>(*node.a, x) / eval_expr<R>(*node.b, x);
    case ExprOp::Neg: return -eval_expr<R>(*node.a, x);
    case ExprOp::Exp: return exp(eval_expr<R>(*node.a, x));
    case ExprOp::Log: return log(eval_expr<R>(*node.a, x));
    case ExprOp::Sqrt: return sqrt(eval_expr<R>(*node.a, x));
    case ExprOp::Sin: return sin(eval_expr<R>(*node.a, x));
    case ExprOp::Cos: return cos(eval_expr<R>(*node.a, x));
    case ExprOp::Tanh: return tanh(eval_expr<R>(*node.a, x));
    case ExprOp::Atan: return atan(eval_expr<R>(*node.a, x));
    case ExprOp::Atan2: return atan2(eval_expr<R>(*node.a, x), eval_expr<R>(*node.b, x));
    case ExprOp::PowInt: return pow_int(eval_expr<R>(*node.a, x), node.k);
    case ExprOp::Deriv: {
      if constexpr (RingDepth<R>::value >= kMaxRingDepth) {
        throw std::runtime_error("expr: derivative nesting exceeds supported depth");
      } else {
        VecN<Cpx<Dual<R>>, Cap> lifted(x.n);
        for (int j = 0; j < x.n; ++j) {
          lifted[j].re = Dual<R>(x[j].re, j == node.k ? R(1.0) : R(0.0));
          lifted[j].im = Dual<R>(x[j].im, R(0.0));
        }
        Cpx<Dual<R>> r = eval_expr<Dual<R>>(*node.a, lifted);
        return Cpx<R>(r.re.d, r.im.d);
      }
    }
  }
  throw std::logic_error("expr: unhandled node");
}

template <class R, int Cap = kJetMaxVars>
Cpx<R> eval_expr(const Expr& e, const VecN<Cpx<R>, Cap>& x) {
  if (!e) throw std::runtime_error("expr: empty expression");
  return eval_expr<R>(*e, x);
}

// Plain-double convenience.
std::complex<double> eval_value(const Expr& e, const VecN<double>& x);

// Structural printer for error messages and report provenance.
std::string to_string(const Expr& e);

}  // namespace ck
