#include "poisonstack/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "poisonstack/errors.hpp"
#include "poisonstack/kernels.hpp"

namespace poisonstack {

CsrMatrix::CsrMatrix(Index n_rows, Index n_cols, std::vector<Index> row_ptr,
                     std::vector<Index> col_idx, std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (row_ptr_.size() != n_rows_ + 1 || row_ptr_.front() != 0)
    throw DimensionError("row_ptr must have n_rows+1 entries starting at 0");
  if (row_ptr_.back() != values_.size() || col_idx_.size() != values_.size())
    throw DimensionError("row_ptr[n_rows], col_idx and values lengths disagree");
  for (Index r = 0; r < n_rows_; ++r) {
    if (row_ptr_[r + 1] < row_ptr_[r]) throw DimensionError("row_ptr is decreasing");
    for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] >= n_cols_)
        throw DimensionError("column index " + std::to_string(col_idx_[k]) + " out of range");
      if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1])
        throw DimensionError("column indices not strictly increasing in row " +
                             std::to_string(r));
      if (!std::isfinite(values_[k])) throw NumericError("non-finite value in CSR matrix");
    }
  }
}

double CsrMatrix::at(Index r, Index c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return values_[row_ptr_[r] + static_cast<Index>(it - cols.begin())];
}

DenseMatrix::DenseMatrix(Index n_rows, Index n_cols, std::vector<double> values)
    : n_rows_(n_rows), n_cols_(n_cols), values_(std::move(values)) {
  if (values_.size() != n_rows_ * n_cols_)
    throw DimensionError("dense values length " + std::to_string(values_.size()) +
                         " != " + std::to_string(n_rows_) + "x" + std::to_string(n_cols_));
}

CsrMatrix coo_to_csr(const CooMatrix& coo) {
  const Index n = coo.n_rows;
  std::vector<Index> row_ptr(n + 1, 0);
  for (const auto& e : coo.entries) {
    if (e.row >= coo.n_rows || e.col >= coo.n_cols)
      throw DimensionError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                           ") outside " + std::to_string(coo.n_rows) + "x" +
                           std::to_string(coo.n_cols));
    if (!std::isfinite(e.value)) throw NumericError("non-finite COO value");
    ++row_ptr[e.row + 1];
  }
  std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());

  // Counting sort by row keeps the file order within a row; then sort by column.
  std::vector<Index> order(coo.entries.size());
  std::vector<Index> fill(row_ptr.begin(), row_ptr.end() - 1);
  for (Index k = 0; k < coo.entries.size(); ++k) order[fill[coo.entries[k].row]++] = k;

  std::vector<Index> col_idx(coo.entries.size());
  std::vector<double> values(coo.entries.size());
  for (Index r = 0; r < n; ++r) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
    std::sort(first, last,
              [&](Index a, Index b) { return coo.entries[a].col < coo.entries[b].col; });
    for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const auto& e = coo.entries[order[k]];
      if (k > row_ptr[r] && col_idx[k - 1] == e.col)
        throw DuplicateEntry("duplicate entry at (" + std::to_string(e.row) + "," +
                             std::to_string(e.col) + ")");
      col_idx[k] = e.col;
      values[k] = e.value;
    }
  }
  return CsrMatrix(coo.n_rows, coo.n_cols, std::move(row_ptr), std::move(col_idx),
                   std::move(values));
}

CooMatrix csr_to_coo(const CsrMatrix& m) {
  CooMatrix coo{m.n_rows(), m.n_cols(), {}};
  coo.entries.reserve(m.nnz());
  for (Index r = 0; r < m.n_rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) coo.entries.push_back({r, cols[k], vals[k]});
  }
  return coo;
}

DenseMatrix to_dense(const CsrMatrix& m) {
  DenseMatrix d(m.n_rows(), m.n_cols());
  for (Index r = 0; r < m.n_rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) d(r, cols[k]) = vals[k];
  }
  return d;
}

CsrMatrix to_csr(const DenseMatrix& d) {
  std::vector<Index> row_ptr(d.n_rows() + 1, 0);
  std::vector<Index> col_idx;
  std::vector<double> values;
  for (Index r = 0; r < d.n_rows(); ++r) {
    for (Index c = 0; c < d.n_cols(); ++c) {
      if (d(r, c) != 0.0) {
        col_idx.push_back(c);
        values.push_back(d(r, c));
      }
    }
    row_ptr[r + 1] = values.size();
  }
  return CsrMatrix(d.n_rows(), d.n_cols(), std::move(row_ptr), std::move(col_idx),
                   std::move(values));
}

CsrMatrix transpose(const CsrMatrix& m) {
  std::vector<Index> row_ptr(m.n_cols() + 1, 0);
  for (Index c : m.col_idx()) ++row_ptr[c + 1];
  std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
  std::vector<Index> fill(row_ptr.begin(), row_ptr.end() - 1);
  std::vector<Index> col_idx(m.nnz());
  std::vector<double> values(m.nnz());
  for (Index r = 0; r < m.n_rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const Index dst = fill[cols[k]]++;
      col_idx[dst] = r;
      values[dst] = vals[k];
    }
  }
  return CsrMatrix(m.n_cols(), m.n_rows(), std::move(row_ptr), std::move(col_idx),
                   std::move(values));
}

DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.n_cols(), m.n_rows());
  for (Index r = 0; r < m.n_rows(); ++r)
    for (Index c = 0; c < m.n_cols(); ++c) t(c, r) = m(r, c);
  return t;
}

CsrMatrix select_rows(const CsrMatrix& m, std::span<const std::size_t> rows) {
  std::vector<Index> row_ptr(rows.size() + 1, 0);
  std::vector<Index> col_idx;
  std::vector<double> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.n_rows()) throw DimensionError("row selection out of range");
    const auto cols = m.row_cols(rows[i]);
    const auto vals = m.row_values(rows[i]);
    col_idx.insert(col_idx.end(), cols.begin(), cols.end());
    values.insert(values.end(), vals.begin(), vals.end());
    row_ptr[i + 1] = values.size();
  }
  return CsrMatrix(rows.size(), m.n_cols(), std::move(row_ptr), std::move(col_idx),
                   std::move(values));
}

DenseMatrix select_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.n_cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.n_rows()) throw DimensionError("row selection out of range");
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> spmv(const CsrMatrix& m, std::span<const double> v) {
  if (v.size() != m.n_cols())
    throw DimensionError("spmv: vector length " + std::to_string(v.size()) +
                         " != n_cols " + std::to_string(m.n_cols()));
  std::vector<double> out(m.n_rows());
  kernels::parallel::spmv(m, v, out);
  return out;
}

std::vector<double> spmv_transpose(const CsrMatrix& m, std::span<const double> v) {
  if (v.size() != m.n_rows())
    throw DimensionError("spmv_transpose: vector length " + std::to_string(v.size()) +
                         " != n_rows " + std::to_string(m.n_rows()));
  std::vector<double> out(m.n_cols());
  kernels::serial::spmv_transpose(m, v, out);
  return out;
}

DenseMatrix multiply(const CsrMatrix& m, const DenseMatrix& b) {
  if (b.n_rows() != m.n_cols()) throw DimensionError("multiply: inner dimensions differ");
  DenseMatrix out(m.n_rows(), b.n_cols());
  kernels::parallel::csr_dense(m, b, out);
  return out;
}

DenseMatrix multiply_transposed(const CsrMatrix& m, const DenseMatrix& b) {
  if (b.n_rows() != m.n_rows())
    throw DimensionError("multiply_transposed: inner dimensions differ");
  DenseMatrix out(m.n_cols(), b.n_cols());
  kernels::parallel::csr_transpose_dense(transpose(m), b, out);
  return out;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.n_cols() != b.n_rows()) throw DimensionError("multiply: inner dimensions differ");
  DenseMatrix out(a.n_rows(), b.n_cols());
  kernels::parallel::gemm(a, b, out);
  return out;
}

double frobenius_norm_squared(const CsrMatrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return s;
}

}  // namespace poisonstack
