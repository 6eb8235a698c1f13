#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ngt/prng.hpp"

namespace ngt::la {

/// Dense row-major matrix, just enough for the eigen/factor work here.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

struct EighResult {
  std::vector<double> values;  // non-increasing
  Matrix vectors;              // column j pairs with values[j]
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

/// Largest-|component| coordinate made positive, first index winning ties, so
/// eigenvectors are reproducible across runs and platforms.
inline void canonicalize_columns(Matrix& v) {
  for (std::size_t j = 0; j < v.cols; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < v.rows; ++i) {
      double a = std::fabs(v(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (v(arg, j) < 0.0)
      for (std::size_t i = 0; i < v.rows; ++i) v(i, j) = -v(i, j);
  }
}

}  // namespace detail

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Intended for the
/// dense Gram matrices produced here (a few hundred rows at most).
inline EighResult jacobi_eigh(const Matrix& sym) {
  if (sym.rows != sym.cols) throw std::invalid_argument("jacobi_eigh: matrix not square");
  const std::size_t n = sym.rows;
  EighResult out;
  if (n == 0) return out;

  Matrix a = sym;
  Matrix v = Matrix::identity(n);
  double fro = 0.0;
  for (double x : a.data) fro += x * x;
  fro = std::sqrt(fro);
  const double stop = (fro > 0.0) ? 1e-14 * fro : 0.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    if (detail::off_diagonal_norm(a) <= stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::fabs(apq) <= stop / static_cast<double>(n * n) || apq == 0.0) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = ((theta >= 0.0) ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::size_t j = 0; j < n; ++j) {
          double apj = a(p, j), aqj = a(q, j);
          a(p, j) = c * apj - s * aqj;
          a(q, j) = s * apj + c * aqj;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  detail::canonicalize_columns(out.vectors);
  return out;
}

using LinearOp = std::function<void(const std::vector<double>&, std::vector<double>&)>;

struct LanczosResult {
  std::vector<double> values;  // non-increasing Ritz values
  Matrix vectors;              // dim x |values| Ritz vectors
};

/// Top-k eigenpairs of a symmetric positive semidefinite operator via Lanczos
/// with full reorthogonalization. Deterministic for a fixed seed.
inline LanczosResult lanczos_topk(const LinearOp& apply, std::size_t dim, std::size_t k,
                                  std::uint64_t seed, double tol = 1e-10,
                                  std::size_t max_basis = 0) {
  LanczosResult out;
  if (dim == 0 || k == 0) return out;
  k = std::min(k, dim);
  if (max_basis == 0) max_basis = std::min(dim, std::max<std::size_t>(8 * k + 80, 320));
  max_basis = std::min(std::max(max_basis, k), dim);

  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;  // beta[j] links basis[j] and basis[j+1]

  auto normalize = [](std::vector<double>& x) {
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm > 0.0)
      for (double& v : x) v /= nrm;
    return nrm;
  };

  auto reorthogonalize = [&](std::vector<double>& w) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += b[i] * w[i];
        for (std::size_t i = 0; i < dim; ++i) w[i] -= dot * b[i];
      }
    }
  };

  std::uint64_t restart = 0;
  auto fresh_vector = [&]() {
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * (restart++));
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    reorthogonalize(v);
    if (normalize(v) == 0.0) {
      // Degenerate draw; deterministic unit fallback.
      std::fill(v.begin(), v.end(), 0.0);
      v[basis.size() % dim] = 1.0;
      reorthogonalize(v);
      normalize(v);
    }
    return v;
  };

  basis.push_back(fresh_vector());
  std::vector<double> w(dim);
  double op_scale = 0.0;

  auto top_converged = [&]() {
    std::size_t m = basis.size();
    if (m < k) return false;
    Matrix t(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    EighResult eig = jacobi_eigh(t);
    double last_beta = beta.empty() ? 0.0 : beta.back();
    for (std::size_t j = 0; j < k; ++j) {
      double resid = std::fabs(last_beta * eig.vectors(m - 1, j));
      double scale = std::max(std::fabs(eig.values[j]), 1e-30);
      if (resid > tol * scale) return false;
    }
    return true;
  };

  while (basis.size() <= max_basis) {
    const auto& v = basis.back();
    apply(v, w);
    double a = 0.0;
    for (std::size_t i = 0; i < dim; ++i) a += v[i] * w[i];
    alpha.push_back(a);
    op_scale = std::max(op_scale, std::fabs(a));
    for (std::size_t i = 0; i < dim; ++i) w[i] -= a * v[i];
    if (basis.size() >= 2) {
      double b_prev = beta.back();
      const auto& v_prev = basis[basis.size() - 2];
      for (std::size_t i = 0; i < dim; ++i) w[i] -= b_prev * v_prev[i];
    }
    reorthogonalize(w);

    if (basis.size() == max_basis) break;
    if (alpha.size() >= k && (alpha.size() % 8 == 0) && top_converged()) break;

    double b = normalize(w);
    if (b <= 1e-13 * std::max(op_scale, 1.0)) {
      if (basis.size() >= dim) break;
      basis.push_back(fresh_vector());
      beta.push_back(0.0);
      continue;
    }
    basis.push_back(w);
    beta.push_back(b);
    w.assign(dim, 0.0);
  }

  std::size_t m = alpha.size();
  Matrix t(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < m && i < beta.size()) t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  EighResult eig = jacobi_eigh(t);

  std::size_t keep = std::min(k, m);
  out.values.assign(eig.values.begin(), eig.values.begin() + keep);
  out.vectors = Matrix(dim, keep);
  for (std::size_t j = 0; j < keep; ++j)
    for (std::size_t b = 0; b < m; ++b) {
      double s = eig.vectors(b, j);
      if (s == 0.0) continue;
      const auto& vb = basis[b];
      for (std::size_t i = 0; i < dim; ++i) out.vectors(i, j) += s * vb[i];
    }
  detail::canonicalize_columns(out.vectors);
  return out;
}

/// Cholesky factorization/solve for the small SPD systems in the CP updates.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& spd) : n_(spd.rows), l_(spd) {
    if (spd.rows != spd.cols) throw std::invalid_argument("cholesky: matrix not square");
    for (std::size_t j = 0; j < n_; ++j) {
      for (std::size_t i = j; i < n_; ++i) {
        double s = l_(i, j);
        for (std::size_t p = 0; p < j; ++p) s -= l_(i, p) * l_(j, p);
        if (i == j) {
          if (s <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
          l_(j, j) = std::sqrt(s);
        } else {
          l_(i, j) = s / l_(j, j);
        }
      }
      for (std::size_t p = j + 1; p < n_; ++p) l_(j, p) = 0.0;
    }
  }

  std::vector<double> solve(const std::vector<double>& b) const {
    if (b.size() != n_) throw std::invalid_argument("cholesky: rhs size mismatch");
    std::vector<double> y(n_), x(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = b[i];
      for (std::size_t p = 0; p < i; ++p) s -= l_(i, p) * y[p];
      y[i] = s / l_(i, i);
    }
    for (std::size_t ii = n_; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t p = ii + 1; p < n_; ++p) s -= l_(p, ii) * x[p];
      x[ii] = s / l_(ii, ii);
    }
    return x;
  }

 private:
  std::size_t n_ = 0;
  Matrix l_;
};

}  // namespace ngt::la
