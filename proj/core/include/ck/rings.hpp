// rings.hpp - scalar rings for forward-mode differentiation.
//
// Three layered types cover every derivative the toolkit needs:
//   Dual<T>   one directional derivative (nestable for higher mixed orders)
//   Jet2<T>   value + gradient + Hessian in up to kJetMaxVars variables
//   Cpx<T>    complex numbers over any real ring, so complex-valued fields
//             can be evaluated with derivative-carrying scalars
//
// All of them are plain value types; nesting (e.g. Jet2<Dual<double>>) is the
// supported way to differentiate through code that itself computes derivatives.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <type_traits>

namespace ck {

inline constexpr int kJetMaxVars = 4;

// Depth guard: expression evaluation can recurse into nested rings (Deriv
// nodes); cap the template recursion so compilation terminates.
template <class T> struct RingDepth { static constexpr int value = 0; };

template <class T> struct Dual;
template <class T> struct Jet2;
template <class T> struct Cpx;

template <class T> struct RingDepth<Dual<T>> { static constexpr int value = RingDepth<T>::value + 1; };
template <class T> struct RingDepth<Jet2<T>> { static constexpr int value = RingDepth<T>::value + 1; };
template <class T> struct RingDepth<Cpx<T>>  { static constexpr int value = RingDepth<T>::value; };

inline constexpr int kMaxRingDepth = 7;

// val(): strip all derivative structure down to the underlying double.
inline double val(double x) { return x; }
template <class T> double val(const Dual<T>& x);
template <class T> double val(const Jet2<T>& x);

// ---------------------------------------------------------------------------
// Dual: single-direction first derivative.
// ---------------------------------------------------------------------------

template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(double c) : v(c), d() {}  // implicit: constants promote with zero derivative
  Dual(T value, T deriv) : v(std::move(value)), d(std::move(deriv)) {}

  Dual operator-() const { return {-v, -d}; }

  Dual& operator+=(const Dual& o) { v = v + o.v; d = d + o.d; return *this; }
  Dual& operator-=(const Dual& o) { v = v - o.v; d = d - o.d; return *this; }
};

template <class T> double val(const Dual<T>& x) { return val(x.v); }

template <class T> Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.v + b.v, a.d + b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.v - b.v, a.d - b.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T inv = T(1.0) / b.v;
  T q = a.v * inv;
  return {q, (a.d - q * b.d) * inv};
}

template <class T> Dual<T> operator+(const Dual<T>& a, double c) { return {a.v + T(c), a.d}; }
template <class T> Dual<T> operator+(double c, const Dual<T>& a) { return {T(c) + a.v, a.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, double c) { return {a.v - T(c), a.d}; }
template <class T> Dual<T> operator-(double c, const Dual<T>& a) { return {T(c) - a.v, -a.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, double c) { return {a.v * c, a.d * c}; }
template <class T> Dual<T> operator*(double c, const Dual<T>& a) { return {a.v * c, a.d * c}; }
template <class T> Dual<T> operator/(const Dual<T>& a, double c) { return {a.v / c, a.d / c}; }
template <class T> Dual<T> operator/(double c, const Dual<T>& a) { return Dual<T>(c) / a; }

using std::atan;
using std::atan2;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;
using std::tanh;

template <class T> Dual<T> exp(const Dual<T>& a)  { T e = exp(a.v); return {e, e * a.d}; }
template <class T> Dual<T> log(const Dual<T>& a)  { return {log(a.v), a.d / a.v}; }
template <class T> Dual<T> sqrt(const Dual<T>& a) { T s = sqrt(a.v); return {s, a.d / (2.0 * s)}; }
template <class T> Dual<T> sin(const Dual<T>& a)  { return {sin(a.v), cos(a.v) * a.d}; }
template <class T> Dual<T> cos(const Dual<T>& a)  { return {cos(a.v), -(sin(a.v) * a.d)}; }
template <class T> Dual<T> tanh(const Dual<T>& a) { T t = tanh(a.v); return {t, (1.0 - t * t) * a.d}; }
template <class T> Dual<T> atan(const Dual<T>& a) {
  return {atan(a.v), a.d / (1.0 + a.v * a.v)};
}
template <class T> Dual<T> atan2(const Dual<T>& y, const Dual<T>& x) {
  T r2 = x.v * x.v + y.v * y.v;
  return {atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / r2};
}

// ---------------------------------------------------------------------------
// Jet2: value, gradient and Hessian in n <= kJetMaxVars variables.
// Storage is fixed-capacity; n is a run-time dimension so one instantiation
// serves charts of dimension 2, 3 and 4.
// ---------------------------------------------------------------------------

template <class T>
struct Jet2 {
  int n = 0;
  T v{};
  std::array<T, kJetMaxVars> g{};
  std::array<T, kJetMaxVars * kJetMaxVars> h{};

  Jet2() = default;
  Jet2(double c) : n(0), v(c) {}
  static Jet2 constant(int nvars, T value) {
    Jet2 r; r.n = nvars; r.v = std::move(value); return r;
  }
  static Jet2 variable(int nvars, int i, T value) {
    Jet2 r; r.n = nvars; r.v = std::move(value); r.g[i] = T(1.0); return r;
  }

  T& H(int i, int j) { return h[i * kJetMaxVars + j]; }
  const T& H(int i, int j) const { return h[i * kJetMaxVars + j]; }

  Jet2 operator-() const {
    Jet2 r = *this;
    r.v = -r.v;
    for (int i = 0; i < n; ++i) r.g[i] = -r.g[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r.H(i, j) = -r.H(i, j);
    return r;
  }
};

template <class T> double val(const Jet2<T>& x) { return val(x.v); }

namespace detail {
// Two jets may meet with n==0 (a constant built from a double); inherit the
// live dimension from the other operand.
template <class T> int jet_dim(const Jet2<T>& a, const Jet2<T>& b) {
  return a.n > b.n ? a.n : b.n;
}
}  // namespace detail

template <class T> Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  Jet2<T> r; r.n = detail::jet_dim(a, b);
  r.v = a.v + b.v;
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] + b.g[i];
  for (int i = 0; i < r.n; ++i)
    for (int j = 0; j < r.n; ++j) r.H(i, j) = a.H(i, j) + b.H(i, j);
  return r;
}
template <class T> Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  Jet2<T> r; r.n = detail::jet_dim(a, b);
  r.v = a.v - b.v;
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] - b.g[i];
  for (int i = 0; i < r.n; ++i)
    for (int j = 0; j < r.n; ++j) r.H(i, j) = a.H(i, j) - b.H(i, j);
  return r;
}
template <class T> Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  Jet2<T> r; r.n = detail::jet_dim(a, b);
  r.v = a.v * b.v;
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  for (int i = 0; i < r.n; ++i)
    for (int j = 0; j < r.n; ++j)
      r.H(i, j) = a.H(i, j) * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.H(i, j);
  return r;
}

// Unary chain rule: given f(v), f'(v), f''(v) of the value, lift to the jet.
template <class T>
Jet2<T> jet_chain(const Jet2<T>& a, T f0, T f1, T f2) {
  Jet2<T> r; r.n = a.n;
  r.v = f0;
  for (int i = 0; i < r.n; ++i) r.g[i] = f1 * a.g[i];
  for (int i = 0; i < r.n; ++i)
    for (int j = 0; j < r.n; ++j) r.H(i, j) = f1 * a.H(i, j) + f2 * a.g[i] * a.g[j];
  return r;
}

template <class T> Jet2<T> inv(const Jet2<T>& a) {
  T i1 = T(1.0) / a.v;
  T i2 = i1 * i1;
  return jet_chain(a, i1, -i2, 2.0 * i2 * i1);
}
template <class T> Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) { return a * inv(b); }

template <class T> Jet2<T> operator+(const Jet2<T>& a, double c) { Jet2<T> r = a; r.v = r.v + T(c); return r; }
template <class T> Jet2<T> operator+(double c, const Jet2<T>& a) { return a + c; }
template <class T> Jet2<T> operator-(const Jet2<T>& a, double c) { Jet2<T> r = a; r.v = r.v - T(c); return r; }
template <class T> Jet2<T> operator-(double c, const Jet2<T>& a) { return (-a) + c; }
template <class T> Jet2<T> operator*(const Jet2<T>& a, double c) {
  Jet2<T> r; r.n = a.n; r.v = a.v * c;
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * c;
  for (int i = 0; i < r.n; ++i)
    for (int j = 0; j < r.n; ++j) r.H(i, j) = a.H(i, j) * c;
  return r;
}
template <class T> Jet2<T> operator*(double c, const Jet2<T>& a) { return a * c; }
template <class T> Jet2<T> operator/(const Jet2<T>& a, double c) { return a * (1.0 / c); }
template <class T> Jet2<T> operator/(double c, const Jet2<T>& a) { return inv(a) * c; }

template <class T> Jet2<T> exp(const Jet2<T>& a) {
  T e = exp(a.v);
  return jet_chain(a, e, e, e);
}
template <class T> Jet2<T> log(const Jet2<T>& a) {
  T i1 = T(1.0) / a.v;
  return jet_chain(a, log(a.v), i1, -(i1 * i1));
}
template <class T> Jet2<T> sqrt(const Jet2<T>& a) {
  T s = sqrt(a.v);
  T f1 = T(0.5) / s;
  return jet_chain(a, s, f1, T(-0.5) * f1 / a.v);
}
template <class T> Jet2<T> sin(const Jet2<T>& a) {
  T s = sin(a.v), c = cos(a.v);
  return jet_chain(a, s, c, -s);
}
template <class T> Jet2<T> cos(const Jet2<T>& a) {
  T s = sin(a.v), c = cos(a.v);
  return jet_chain(a, c, -s, -c);
}
template <class T> Jet2<T> tanh(const Jet2<T>& a) {
  T t = tanh(a.v);
  T sech2 = T(1.0) - t * t;
  return jet_chain(a, t, sech2, T(-2.0) * t * sech2);
}
template <class T> Jet2<T> atan(const Jet2<T>& a) {
  T den = T(1.0) + a.v * a.v;
  T f1 = T(1.0) / den;
  return jet_chain(a, atan(a.v), f1, T(-2.0) * a.v * f1 * f1);
}

/// Binary chain rule for atan2(y, x): first and second partials of the angle.
template <class T>
Jet2<T> atan2(const Jet2<T>& y, const Jet2<T>& x) {
  int n = detail::jet_dim(y, x);
  T z = x.v * x.v + y.v * y.v;
  T fy = x.v / z;          // d(theta)/dy
  T fx = -(y.v / z);       // d(theta)/dx
  T z2 = z * z;
  T fyy = T(-2.0) * x.v * y.v / z2;
  T fxx = T(2.0) * x.v * y.v / z2;
  T fxy = (y.v * y.v - x.v * x.v) / z2;
  Jet2<T> r; r.n = n;
  r.v = atan2(y.v, x.v);
  for (int i = 0; i < n; ++i) r.g[i] = fy * y.g[i] + fx * x.g[i];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      r.H(i, j) = fy * y.H(i, j) + fx * x.H(i, j) + fyy * y.g[i] * y.g[j] +
                  fxx * x.g[i] * x.g[j] + fxy * (y.g[i] * x.g[j] + x.g[i] * y.g[j]);
  return r;
}

// ---------------------------------------------------------------------------
// Cpx: complex numbers over any real ring.
// ---------------------------------------------------------------------------

template <class T>
struct Cpx {
  T re{};
  T im{};

  Cpx() = default;
  Cpx(double c) : re(c), im() {}
  Cpx(T r) requires(!std::is_same_v<T, double>) : re(std::move(r)), im() {}
  Cpx(T r, T i) : re(std::move(r)), im(std::move(i)) {}

  Cpx operator-() const { return {-re, -im}; }
  Cpx conj() const { return {re, -im}; }
};

template <class T> Cpx<T> operator+(const Cpx<T>& a, const Cpx<T>& b) { return {a.re + b.re, a.im + b.im}; }
template <class T> Cpx<T> operator-(const Cpx<T>& a, const Cpx<T>& b) { return {a.re - b.re, a.im - b.im}; }
template <class T> Cpx<T> operator*(const Cpx<T>& a, const Cpx<T>& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T> Cpx<T> operator/(const Cpx<T>& a, const Cpx<T>& b) {
  T den = b.re * b.re + b.im * b.im;
  return {(a.re * b.re + a.im * b.im) / den, (a.im * b.re - a.re * b.im) / den};
}
template <class T> Cpx<T> operator+(const Cpx<T>& a, double c) { return {a.re + c, a.im}; }
template <class T> Cpx<T> operator+(double c, const Cpx<T>& a) { return a + c; }
template <class T> Cpx<T> operator-(const Cpx<T>& a, double c) { return {a.re - c, a.im}; }
template <class T> Cpx<T> operator-(double c, const Cpx<T>& a) { return {c - a.re, -a.im}; }
template <class T> Cpx<T> operator*(const Cpx<T>& a, double c) { return {a.re * c, a.im * c}; }
template <class T> Cpx<T> operator*(double c, const Cpx<T>& a) { return a * c; }
template <class T> Cpx<T> operator/(const Cpx<T>& a, double c) { return {a.re / c, a.im / c}; }
template <class T> Cpx<T> operator/(double c, const Cpx<T>& a) { return Cpx<T>(c) / a; }

template <class T> Cpx<T> exp(const Cpx<T>& a) {
  T e = exp(a.re);
  return {e * cos(a.im), e * sin(a.im)};
}
template <class T> Cpx<T> log(const Cpx<T>& a) {
  T r2 = a.re * a.re + a.im * a.im;
  return {0.5 * log(r2), atan2(a.im, a.re)};
}
template <class T> Cpx<T> sqrt(const Cpx<T>& a) { return exp(0.5 * log(a)); }
template <class T> Cpx<T> sin(const Cpx<T>& a) {
  // sin(x+iy) = sin x cosh y + i cos x sinh y; cosh/sinh via exp to stay
  // within the ring primitives.
  T ep = exp(a.im), em = T(1.0) / ep;
  T ch = 0.5 * (ep + em), sh = 0.5 * (ep - em);
  return {sin(a.re) * ch, cos(a.re) * sh};
}
template <class T> Cpx<T> cos(const Cpx<T>& a) {
  T ep = exp(a.im), em = T(1.0) / ep;
  T ch = 0.5 * (ep + em), sh = 0.5 * (ep - em);
  return {cos(a.re) * ch, -(sin(a.re) * sh)};
}
// Real-only transcendentals: defined on the real part. Used by weight-family
// expressions (always real); complex constants never reach these nodes.
template <class T> Cpx<T> atan(const Cpx<T>& a) { return {atan(a.re), T(0.0)}; }
template <class T> Cpx<T> atan2(const Cpx<T>& y, const Cpx<T>& x) {
  return {atan2(y.re, x.re), T(0.0)};
}
template <class T> Cpx<T> tanh(const Cpx<T>& a) { return {tanh(a.re), T(0.0)}; }

template <class T> double val(const Cpx<T>& x) { return val(x.re); }
template <class T> double val_im(const Cpx<T>& x) { return val(x.im); }

template <class T> T abs2(const Cpx<T>& a) { return a.re * a.re + a.im * a.im; }

// Integer power by repeated multiplication; exact for jets.
template <class R> R pow_int(const R& a, int k) {
  if (k < 0) return R(1.0) / pow_int(a, -k);
  R r(1.0);
  R base = a;
  int e = k;
  while (e > 0) {
    if (e & 1) r = r * base;
    base = base * base;
    e >>= 1;
  }
  return r;
}

}  // namespace ck
