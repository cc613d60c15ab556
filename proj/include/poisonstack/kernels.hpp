#pragma once

// Data-parallel kernels. Each kernel has a serial reference and an OpenMP
// version; the two produce bit-identical results because every output element
// is accumulated by a single thread in the same order as the serial loop.

#include <span>
#include <vector>

#include "poisonstack/matrix.hpp"

namespace poisonstack::kernels {

namespace serial {

void spmv(const CsrMatrix& m, std::span<const double> v, std::span<double> out);
void spmv_transpose(const CsrMatrix& m, std::span<const double> v, std::span<double> out);
void csr_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out);
void csr_transpose_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out);
void gemm(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);

}  // namespace serial

namespace parallel {

void spmv(const CsrMatrix& m, std::span<const double> v, std::span<double> out);
// Works on a precomputed transpose so rows accumulate independently.
void spmv_transpose(const CsrMatrix& m_transposed, std::span<const double> v,
                    std::span<double> out);
void csr_dense(const CsrMatrix& m, const DenseMatrix& b, DenseMatrix& out);
void csr_transpose_dense(const CsrMatrix& m_transposed, const DenseMatrix& b, DenseMatrix& out);
void gemm(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);

}  // namespace parallel

int max_threads();

}  // namespace poisonstack::kernels
