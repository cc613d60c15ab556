#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace poisonstack {

using Index = std::uint64_t;

struct CooEntry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

// Triplet form as read from an archive. No ordering requirement; duplicate
// (row, col) pairs are rejected by coo_to_csr rather than summed.
struct CooMatrix {
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<CooEntry> entries;
};

// Compressed sparse row matrix. Immutable once built; column indices are
// strictly increasing within each row and every value is finite.
class CsrMatrix {
 public:
  CsrMatrix() : row_ptr_(1, 0) {}
  explicit CsrMatrix(Index n_rows, Index n_cols)
      : n_rows_(n_rows), n_cols_(n_cols), row_ptr_(n_rows + 1, 0) {}

  // Validates every invariant and throws DimensionError / NumericError.
  CsrMatrix(Index n_rows, Index n_cols, std::vector<Index> row_ptr,
            std::vector<Index> col_idx, std::vector<double> values);

  Index n_rows() const noexcept { return n_rows_; }
  Index n_cols() const noexcept { return n_cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const Index> row_cols(Index r) const noexcept {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(Index r) const noexcept {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  // Stored value or 0.
  double at(Index r, Index c) const;

  bool operator==(const CsrMatrix&) const = default;

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(Index n_rows, Index n_cols, double fill = 0.0)
      : n_rows_(n_rows), n_cols_(n_cols), values_(n_rows * n_cols, fill) {}
  DenseMatrix(Index n_rows, Index n_cols, std::vector<double> values);

  Index n_rows() const noexcept { return n_rows_; }
  Index n_cols() const noexcept { return n_cols_; }

  double& operator()(Index r, Index c) noexcept { return values_[r * n_cols_ + c]; }
  double operator()(Index r, Index c) const noexcept { return values_[r * n_cols_ + c]; }

  std::span<double> row(Index r) noexcept { return {values_.data() + r * n_cols_, n_cols_}; }
  std::span<const double> row(Index r) const noexcept {
    return {values_.data() + r * n_cols_, n_cols_};
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<double> values_;
};

CsrMatrix coo_to_csr(const CooMatrix& coo);
CooMatrix csr_to_coo(const CsrMatrix& m);

DenseMatrix to_dense(const CsrMatrix& m);
// Stores every nonzero of `d`.
CsrMatrix to_csr(const DenseMatrix& d);

CsrMatrix transpose(const CsrMatrix& m);
DenseMatrix transpose(const DenseMatrix& m);

// Row subset in the given order.
CsrMatrix select_rows(const CsrMatrix& m, std::span<const std::size_t> rows);
DenseMatrix select_rows(const DenseMatrix& m, std::span<const std::size_t> rows);

std::vector<double> spmv(const CsrMatrix& m, std::span<const double> v);
std::vector<double> spmv_transpose(const CsrMatrix& m, std::span<const double> v);

// m · b and mᵀ · b for dense right-hand sides.
DenseMatrix multiply(const CsrMatrix& m, const DenseMatrix& b);
DenseMatrix multiply_transposed(const CsrMatrix& m, const DenseMatrix& b);
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);

double frobenius_norm_squared(const CsrMatrix& m);

}  // namespace poisonstack
