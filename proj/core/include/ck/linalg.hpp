// linalg.hpp - fixed-capacity vectors/matrices over differentiation rings.
//
// Eigen handles the plain-double dense work elsewhere; these containers exist
// because metric algebra has to run on jet- and dual-valued scalars.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <stdexcept>

#include "ck/rings.hpp"

namespace ck {

// Capacity defaults to the jet variable cap; the symbol machinery passes a
// wider Cap because it works over joint (x, xi') coordinates.
template <class T, int Cap = kJetMaxVars>
struct VecN {
  int n = 0;
  std::array<T, Cap> a{};

  VecN() = default;
  explicit VecN(int dim) : n(dim) {}
  VecN(std::initializer_list<T> xs) : n(int(xs.size())) {
    if (n > Cap) throw std::length_error("VecN: more initializers than capacity");
    std::copy(xs.begin(), xs.end(), a.begin());
  }
  T& operator[](int i) { return a[i]; }
  const T& operator[](int i) const { return a[i]; }
};

template <class T, int Cap = kJetMaxVars>
struct MatN {
  int n = 0;
  std::array<T, Cap * Cap> a{};

  MatN() = default;
  explicit MatN(int dim) : n(dim) {}
  T& operator()(int i, int j) { return a[i * Cap + j]; }
  const T& operator()(int i, int j) const { return a[i * Cap + j]; }

  static MatN identity(int dim) {
    MatN m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = T(1.0);
    return m;
  }
};

template <class T, int Cap>
VecN<T, Cap> matvec(const MatN<T, Cap>& m, const VecN<T, Cap>& v) {
  VecN<T, Cap> r(m.n);
  for (int i = 0; i < m.n; ++i) {
    T s{};
    for (int j = 0; j < m.n; ++j) s = s + m(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

template <class T, int Cap>
T dot(const VecN<T, Cap>& a, const VecN<T, Cap>& b) {
  T s{};
  for (int i = 0; i < a.n; ++i) s = s + a[i] * b[i];
  return s;
}

// Bilinear form v^T m w (no conjugation; rings may be complex).
template <class T, int Cap>
T form(const MatN<T, Cap>& m, const VecN<T, Cap>& v, const VecN<T, Cap>& w) {
  T s{};
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) s = s + m(i, j) * v[i] * w[j];
  return s;
}

// Gaussian elimination with partial pivoting on |val|. Dimensions <= 4, so
// no blocking; pivot magnitude uses the underlying double value, which is the
// right choice for jet scalars (the value part decides invertibility).
template <class T, int Cap>
MatN<T, Cap> inverse(const MatN<T, Cap>& m) {
  const int n = m.n;
  MatN<T, Cap> a = m;
  MatN<T, Cap> r = MatN<T, Cap>::identity(n);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(val(a(col, col)));
    for (int i = col + 1; i < n; ++i) {
      double cand = std::abs(val(a(i, col)));
      if (cand > best) { best = cand; piv = i; }
    }
    if (best == 0.0) throw std::runtime_error("linalg: singular matrix");
    if (piv != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(a(col, j), a(piv, j));
        std::swap(r(col, j), r(piv, j));
      }
    }
    T inv_p = T(1.0) / a(col, col);
    for (int j = 0; j < n; ++j) { a(col, j) = a(col, j) * inv_p; r(col, j) = r(col, j) * inv_p; }
    for (int i = 0; i < n; ++i) {
      if (i == col) continue;
      T f = a(i, col);
      for (int j = 0; j < n; ++j) {
        a(i, j) = a(i, j) - f * a(col, j);
        r(i, j) = r(i, j) - f * r(col, j);
      }
    }
  }
  return r;
}

template <class T, int Cap>
T det(const MatN<T, Cap>& m) {
  const int n = m.n;
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (n == 3)
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  // n == 4: expand along the first row.
  T d{};
  MatN<T, Cap> sub(3);
  double sign = 1.0;
  for (int c = 0; c < 4; ++c) {
    for (int i = 1; i < 4; ++i) {
      int jj = 0;
      for (int j = 0; j < 4; ++j) {
        if (j == c) continue;
        sub(i - 1, jj++) = m(i, j);
      }
    }
    d = d + sign * m(0, c) * det(sub);
    sign = -sign;
  }
  return d;
}

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
template <class T, int Cap>
MatN<T, Cap> cholesky(const MatN<T, Cap>& m) {
  const int n = m.n;
  MatN<T, Cap> L(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      T s = m(i, j);
      for (int k = 0; k < j; ++k) s = s - L(i, k) * L(j, k);
      if (i == j) {
        if (val(s) <= 0.0) throw std::runtime_error("linalg: matrix not positive definite");
        L(i, j) = sqrt(s);
      } else {
        L(i, j) = s / L(j, j);
      }
    }
  }
  return L;
}

// Symmetric eigenvalues by cyclic Jacobi rotations (plain double, n <= 4).
inline std::array<double, kJetMaxVars> sym_eigenvalues(MatN<double> m) {
  const int n = m.n;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (off < 1e-28) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(m(p, q)) < 1e-300) continue;
        double theta = 0.5 * std::atan2(2.0 * m(p, q), m(q, q) - m(p, p));
        double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  std::array<double, kJetMaxVars> ev{};
  for (int i = 0; i < n; ++i) ev[i] = m(i, i);
  std::sort(ev.begin(), ev.begin() + n);
  return ev;
}

}  // namespace ck
