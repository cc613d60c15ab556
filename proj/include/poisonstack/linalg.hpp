#pragma once

#include <span>
#include <vector>

#include "poisonstack/matrix.hpp"

// Small dense factorizations used by the decomposition and the Gaussian
// learners. Inputs are modest (tens to a few thousand rows, < 200 columns).
namespace poisonstack::linalg {

// Thin Householder QR: returns Q (m×n, orthonormal columns) for m ≥ n.
// Rank-deficient input still yields orthonormal columns.
DenseMatrix orthonormalize(const DenseMatrix& a);

struct Svd {
  DenseMatrix u;                        // m×n, orthonormal columns
  std::vector<double> singular_values;  // length n, non-increasing
  DenseMatrix v;                        // n×n, orthogonal
};

// One-sided Jacobi SVD of a (m×n, m ≥ n): a = u · diag(s) · vᵀ.
// Columns of u with zero singular value are completed to an orthonormal set.
Svd jacobi_svd(const DenseMatrix& a);

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
// Throws NumericError when a pivot is not positive.
DenseMatrix cholesky(const DenseMatrix& a);

// Solves (l lᵀ) x = b given the Cholesky factor l.
std::vector<double> cholesky_solve(const DenseMatrix& l, std::span<const double> b);

// Solves l y = b (forward substitution only).
std::vector<double> forward_substitute(const DenseMatrix& l, std::span<const double> b);

double cholesky_log_det(const DenseMatrix& l);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace poisonstack::linalg
