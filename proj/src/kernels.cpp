#include "poisonstack/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poisonstack::kernels {

namespace serial {

void spmv(const CsrMatrix& m, std::span<const double> v, std::span<double> out) {
  const auto row_ptr = m.row_ptr();
  const auto col_idx = m.col_idx();
  const auto values = m.values();
  for (Index r = 0; r < m.n_rows(); ++r) {
    double acc = 0.0;
    for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += values[k] * v[col_idx[k]];
    out[r] = acc;
  }
}

void spmv_transpose(const CsrMatrix& m, std::span<const double> v, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto row_ptr = m.row_ptr();
  const auto col_idx = m.col_idx();
  const auto values = m.values();
  for (Index r = 0; r < m.n_rows(); ++r)
    for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[col_idx[k]] += values[k] * v[r];
}

void csr_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out) {
  const Index width = b.n_cols();
  std::fill(out.values().begin(), out.values().end(), 0.0);
  for (Index r = 0; r < m.n_rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto src = b.row(cols[k]);
      for (Index j = 0; j < width; ++j) dst[j] += vals[k] * src[j];
    }
  }
}

void csr_transpose_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out) {
  const Index width = b.n_cols();
  std::fill(out.values().begin(), out.values().end(), 0.0);
  for (Index r = 0; r < m.n_rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    const auto src = b.row(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      auto dst = out.row(cols[k]);
      for (Index j = 0; j < width; ++j) dst[j] += vals[k] * src[j];
    }
  }
}

void gemm(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  std::fill(out.values().begin(), out.values().end(), 0.0);
  for (Index i = 0; i < a.n_rows(); ++i) {
    auto dst = out.row(i);
    for (Index k = 0; k < a.n_cols(); ++k) {
      const double aik = a(i, k);
      const auto src = b.row(k);
      for (Index j = 0; j < b.n_cols(); ++j) dst[j] += aik * src[j];
    }
  }
}

}  // namespace serial

namespace parallel {

void spmv(const CsrMatrix& m, std::span<const double> v, std::span<double> out) {
  const auto row_ptr = m.row_ptr();
  const auto col_idx = m.col_idx();
  const auto values = m.values();
  const auto n = static_cast<std::int64_t>(m.n_rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += values[k] * v[col_idx[k]];
    out[r] = acc;
  }
}

void spmv_transpose(const CsrMatrix& m_transposed, std::span<const double> v,
                    std::span<double> out) {
  spmv(m_transposed, v, out);
}

void csr_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out) {
  const Index width = b.n_cols();
  const auto n = static_cast<std::int64_t>(m.n_rows());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    auto dst = out.row(r);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto src = b.row(cols[k]);
      for (Index j = 0; j < width; ++j) dst[j] += vals[k] * src[j];
    }
  }
}

void csr_transpose_dense(const CsrMatrix& m_transposed, const DenseMatrix& b, DenseMatrix& out) {
  csr_dense(m_transposed, b, out);
}

void gemm(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  const auto n = static_cast<std::int64_t>(a.n_rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (Index k = 0; k < a.n_cols(); ++k) {
      const double aik = a(i, k);
      const auto src = b.row(k);
      for (Index j = 0; j < b.n_cols(); ++j) dst[j] += aik * src[j];
    }
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace poisonstack::kernels
