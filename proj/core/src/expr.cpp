#include "ck/expr.hpp"

#include <sstream>

namespace ck {

std::complex<double> eval_value(const Expr& e, const VecN<double>& x) {
  VecN<Cpx<double>> coords(x.n);
  for (int i = 0; i < x.n; ++i) coords[i] = Cpx<double>{x[i], 0.0};
  Cpx<double> r = eval_expr<double>(e, coords);
  return {r.re, r.im};
}

namespace {

void print(std::ostream& os, const Expr& e) {
  if (!e) {
    os << "<null>";
    return;
  }
  switch (e->op) {
    case ExprOp::Const:
      if (e->c.imag() == 0.0) {
        os << e->c.real();
      } else {
        os << "(" << e->c.real() << (e->c.imag() < 0 ? "-" : "+") << std::abs(e->c.imag()) << "i)";
      }
      break;
    case ExprOp::Coord:
      os << "x" << e->k + 1;
      break;
    case ExprOp::Add:
      os << "(";
      print(os, e->a);
      os << " + ";
      print(os, e->b);
      os << ")";
      break;
    case ExprOp::Sub:
      os << "(";
      print(os, e->a);
      os << " - ";
      print(os, e->b);
      os << ")";
      break;
    case ExprOp::Mul:
      os << "(";
      print(os, e->a);
      os << " * ";
      print(os, e->b);
      os << ")";
      break;
    case ExprOp::Div:
      os << "(";
      print(os, e->a);
      os << " / ";
      print(os, e->b);
      os << ")";
      break;
    case ExprOp::Neg:
      os << "(-";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Exp:
      os << "exp(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Log:
      os << "log(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Sqrt:
      os << "sqrt(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Sin:
      os << "sin(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Cos:
      os << "cos(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Tanh:
      os << "tanh(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Atan:
      os << "atan(";
      print(os, e->a);
      os << ")";
      break;
    case ExprOp::Atan2:
      os << "atan2(";
      print(os, e->a);
      os << ", ";
      print(os, e->b);
      os << ")";
      break;
    case ExprOp::PowInt:
      os << "pow(";
      print(os, e->a);
      os << ", " << e->k << ")";
      break;
    case ExprOp::Deriv:
      os << "d/dx" << e->k + 1 << "[";
      print(os, e->a);
      os << "]";
      break;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::ostringstream os;
  print(os, e);
  return os.str();
}

}  // namespace ck
