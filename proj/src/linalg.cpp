#include "poisonstack/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poisonstack/errors.hpp"

namespace poisonstack::linalg {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

DenseMatrix orthonormalize(const DenseMatrix& a) {
  const Index m = a.n_rows();
  const Index n = a.n_cols();
  if (m < n) throw DimensionError("orthonormalize requires rows >= cols");

  // Column-major working copy; reflectors are stored in place below the diagonal.
  std::vector<std::vector<double>> cols(n, std::vector<double>(m));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) cols[j][i] = a(i, j);

  std::vector<std::vector<double>> reflectors(n);
  for (Index j = 0; j < n; ++j) {
    auto& x = cols[j];
    double norm = 0.0;
    for (Index i = j; i < m; ++i) norm += x[i] * x[i];
    norm = std::sqrt(norm);
    std::vector<double> v(m - j, 0.0);
    if (norm == 0.0) {
      // Degenerate column: any unit reflector keeps Q orthonormal.
      v[0] = 1.0;
    } else {
      const double alpha = x[j] >= 0.0 ? -norm : norm;
      for (Index i = j; i < m; ++i) v[i - j] = x[i];
      v[0] -= alpha;
      double vnorm = 0.0;
      for (double e : v) vnorm += e * e;
      vnorm = std::sqrt(vnorm);
      if (vnorm == 0.0) {
        v.assign(m - j, 0.0);
        v[0] = 1.0;
      } else {
        for (double& e : v) e /= vnorm;
      }
    }
    // Apply H = I - 2vvᵀ to the remaining columns.
    for (Index c = j; c < n; ++c) {
      double s = 0.0;
      for (Index i = j; i < m; ++i) s += v[i - j] * cols[c][i];
      for (Index i = j; i < m; ++i) cols[c][i] -= 2.0 * s * v[i - j];
    }
    reflectors[j] = std::move(v);
  }

  // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
  DenseMatrix q(m, n);
  std::vector<double> e(m);
  for (Index c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    for (Index jj = n; jj-- > 0;) {
      const auto& v = reflectors[jj];
      double s = 0.0;
      for (Index i = jj; i < m; ++i) s += v[i - jj] * e[i];
      for (Index i = jj; i < m; ++i) e[i] -= 2.0 * s * v[i - jj];
    }
    for (Index i = 0; i < m; ++i) q(i, c) = e[i];
  }
  return q;
}

Svd jacobi_svd(const DenseMatrix& a) {
  const Index m = a.n_rows();
  const Index n = a.n_cols();
  if (m < n) throw DimensionError("jacobi_svd requires rows >= cols");

  std::vector<std::vector<double>> u(n, std::vector<double>(m));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) u[j][i] = a(i, j);
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (Index j = 0; j < n; ++j) v[j][j] = 1.0;

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = dot(u[p], u[p]);
        const double beta = dot(u[q], u[q]);
        const double gamma = dot(u[p], u[q]);
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index i = 0; i < m; ++i) {
          const double up = u[p][i];
          const double uq = u[q][i];
          u[p][i] = c * up - s * uq;
          u[q][i] = s * up + c * uq;
        }
        for (Index i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (Index j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(u[j], u[j]));

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return sigma[x] > sigma[y]; });

  const double smax = n > 0 ? sigma[order[0]] : 0.0;
  const double cutoff = smax * static_cast<double>(std::max(m, n)) * 1e-15;

  Svd out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
  std::vector<std::vector<double>> basis;  // accepted orthonormal u columns
  for (Index jj = 0; jj < n; ++jj) {
    const Index j = order[jj];
    std::vector<double> col(m, 0.0);
    bool ok = sigma[j] > cutoff && sigma[j] > 0.0;
    if (ok) {
      for (Index i = 0; i < m; ++i) col[i] = u[j][i] / sigma[j];
    } else {
      // Complete with the first standard basis vector that survives
      // Gram-Schmidt against the columns accepted so far.
      for (Index e = 0; e < m; ++e) {
        std::fill(col.begin(), col.end(), 0.0);
        col[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
          for (const auto& b : basis) {
            const double proj = dot(b, col);
            for (Index i = 0; i < m; ++i) col[i] -= proj * b[i];
          }
        const double nrm = std::sqrt(dot(col, col));
        if (nrm > 1e-8) {
          for (double& x : col) x /= nrm;
          break;
        }
      }
    }
    out.singular_values[jj] = ok ? sigma[j] : 0.0;
    for (Index i = 0; i < m; ++i) out.u(i, jj) = col[i];
    for (Index i = 0; i < n; ++i) out.v(i, jj) = v[j][i];
    basis.push_back(std::move(col));
  }
  return out;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  const Index n = a.n_rows();
  if (a.n_cols() != n) throw DimensionError("cholesky requires a square matrix");
  DenseMatrix l(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("matrix is not positive definite");
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

std::vector<double> forward_substitute(const DenseMatrix& l, std::span<const double> b) {
  const Index n = l.n_rows();
  std::vector<double> y(b.begin(), b.end());
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

std::vector<double> cholesky_solve(const DenseMatrix& l, std::span<const double> b) {
  const Index n = l.n_rows();
  auto x = forward_substitute(l, b);
  for (Index i = n; i-- > 0;) {
    for (Index k = i + 1; k < n; ++k) x[i] -= l(k, i) * x[k];
    x[i] /= l(i, i);
  }
  return x;
}

double cholesky_log_det(const DenseMatrix& l) {
  double s = 0.0;
  for (Index i = 0; i < l.n_rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace poisonstack::linalg
