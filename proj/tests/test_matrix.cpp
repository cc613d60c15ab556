#include <doctest.h>

#include <random>

#include "poisonstack/errors.hpp"
#include "poisonstack/kernels.hpp"
#include "poisonstack/matrix.hpp"
#include "test_support.hpp"

using namespace poisonstack;
using namespace testing_support;

TEST_CASE("coo_to_csr of an empty 3x3 is the zero matrix") {
  const auto csr = coo_to_csr(CooMatrix{3, 3, {}});
  CHECK(std::vector<Index>(csr.row_ptr().begin(), csr.row_ptr().end()) ==
        std::vector<Index>{0, 0, 0, 0});
  CHECK(csr.nnz() == 0);
}

TEST_CASE("coo_to_csr of the diagonal triplets is the identity") {
  const auto csr = coo_to_csr(CooMatrix{3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}}});
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 3; ++c) CHECK(csr.at(r, c) == (r == c ? 1.0 : 0.0));
  CHECK(std::vector<Index>(csr.row_ptr().begin(), csr.row_ptr().end()) ==
        std::vector<Index>{0, 1, 2, 3});
}

TEST_CASE("coo_to_csr matches a dense oracle built from triplets") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto coo = random_coo(gen, 5, 4, 7);
    const auto csr = coo_to_csr(coo);
    CHECK(dense_of(csr) == dense_from_triplets(coo));
    CHECK(csr.nnz() == 7);
    for (Index r = 0; r < csr.n_rows(); ++r) {
      const auto cols = csr.row_cols(r);
      CHECK(std::is_sorted(cols.begin(), cols.end()));
    }
  }
}

TEST_CASE("coo_to_csr rejects duplicates and out-of-range entries") {
  CHECK_THROWS_AS(coo_to_csr(CooMatrix{2, 2, {{1, 0, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}}}),
                  DuplicateEntry);
  try {
    coo_to_csr(CooMatrix{2, 2, {{1, 1, 1.0}, {1, 1, 2.0}}});
    FAIL("expected DuplicateEntry");
  } catch (const DuplicateEntry& e) {
    CHECK(std::string(e.what()).find("(1,1)") != std::string::npos);
  }
  CHECK_THROWS_AS(coo_to_csr(CooMatrix{2, 2, {{2, 0, 1.0}}}), DimensionError);
  CHECK_THROWS_AS(coo_to_csr(CooMatrix{2, 2, {{0, 0, std::nan("")}}}), NumericError);
}

TEST_CASE("CsrMatrix constructor enforces invariants") {
  CHECK_THROWS_AS(CsrMatrix(2, 2, {0, 1}, {0}, {1.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 2}, {2, 1}, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 2}, {1, 1}, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 1}, {0}, {INFINITY}), NumericError);
  CHECK_NOTHROW(CsrMatrix(1, 3, {0, 2}, {0, 2}, {1.0, 1.0}));
}

TEST_CASE("csr -> coo -> csr is exact") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_csr(gen, 1 + trial % 7, 1 + trial % 5, 0.4);
    CHECK(coo_to_csr(csr_to_coo(m)) == m);
  }
}

TEST_CASE("spmv fixed cases") {
  const auto id = coo_to_csr(CooMatrix{3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}}});
  CHECK(spmv(id, std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
  CHECK(spmv_transpose(id, std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
  const CsrMatrix zero(3, 2);
  CHECK(spmv(zero, std::vector<double>{4, 5}) == std::vector<double>{0, 0, 0});

  const auto row = coo_to_csr(CooMatrix{1, 3, {{0, 0, 1.5}, {0, 1, -2.0}, {0, 2, 7.0}}});
  CHECK(spmv_transpose(row, std::vector<double>{2.0}) == std::vector<double>{3.0, -4.0, 14.0});

  CHECK_THROWS_AS(spmv(id, std::vector<double>{1, 2}), DimensionError);
  CHECK_THROWS_AS(spmv_transpose(row, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("spmv and spmv_transpose match dense loops on random 6x4") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_csr(gen, 6, 4, 0.5);
    const auto d = dense_of(m);
    const auto v = random_vector(gen, 4);
    const auto u = random_vector(gen, 6);
    const auto got = spmv(m, v);
    const auto want = dense_matvec(d, 6, 4, v);
    for (int i = 0; i < 6; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    std::vector<double> dt(4 * 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 4; ++j) dt[j * 6 + i] = d[i * 4 + j];
    const auto got_t = spmv_transpose(m, u);
    const auto want_t = dense_matvec(dt, 4, 6, u);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(got_t[j] - want_t[j]) <= 1e-12);
  }
}

TEST_CASE("property: adjoint identity u.(Mv) == (M^T u).v") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 200; ++trial) {
    const Index rows = 1 + gen() % 12;
    const Index cols = 1 + gen() % 12;
    const auto m = random_csr(gen, rows, cols, 0.3);
    const auto u = random_vector(gen, rows);
    const auto v = random_vector(gen, cols);
    const auto mv = spmv(m, v);
    const auto mtu = spmv_transpose(m, u);
    double lhs = 0, rhs = 0;
    for (Index i = 0; i < rows; ++i) lhs += u[i] * mv[i];
    for (Index j = 0; j < cols; ++j) rhs += mtu[j] * v[j];
    CHECK(std::abs(lhs - rhs) <= 1e-10);
  }
}

TEST_CASE("property: spmv on shapes up to 8x8 equals brute force elementwise") {
  std::mt19937_64 gen(3);
  for (Index rows = 1; rows <= 8; ++rows)
    for (Index cols = 1; cols <= 8; ++cols) {
      const auto m = random_csr(gen, rows, cols, 0.35);
      const auto v = random_vector(gen, cols);
      const auto got = spmv(m, v);
      const auto want = dense_matvec(dense_of(m), rows, cols, v);
      for (Index i = 0; i < rows; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("parallel kernels are bit-identical to the serial references") {
  std::mt19937_64 gen(8);
  const auto m = random_csr(gen, 137, 61, 0.1);
  const auto mt = transpose(m);
  const auto v = random_vector(gen, 61);
  const auto u = random_vector(gen, 137);

  std::vector<double> a(137), b(137), c(61), d(61);
  kernels::serial::spmv(m, v, a);
  kernels::parallel::spmv(m, v, b);
  CHECK(a == b);
  kernels::serial::spmv_transpose(m, u, c);
  kernels::parallel::spmv_transpose(mt, u, d);
  CHECK(c == d);

  DenseMatrix rhs(61, 9), rhs_t(137, 9);
  for (double& x : rhs.values()) x = random_vector(gen, 1)[0];
  for (double& x : rhs_t.values()) x = random_vector(gen, 1)[0];
  DenseMatrix s1(137, 9), p1(137, 9), s2(61, 9), p2(61, 9);
  kernels::serial::csr_dense(m, rhs, s1);
  kernels::parallel::csr_dense(m, rhs, p1);
  CHECK(s1 == p1);
  kernels::serial::csr_transpose_dense(m, rhs_t, s2);
  kernels::parallel::csr_transpose_dense(mt, rhs_t, p2);
  CHECK(s2 == p2);

  const DenseMatrix da = to_dense(m);
  DenseMatrix g1(137, 9), g2(137, 9);
  kernels::serial::gemm(da, rhs, g1);
  kernels::parallel::gemm(da, rhs, g2);
  CHECK(g1 == g2);
}

TEST_CASE("transpose and row selection") {
  std::mt19937_64 gen(17);
  const auto m = random_csr(gen, 9, 5, 0.4);
  CHECK(transpose(transpose(m)) == m);
  const auto t = transpose(m);
  for (Index r = 0; r < 9; ++r)
    for (Index c = 0; c < 5; ++c) CHECK(t.at(c, r) == m.at(r, c));
  const std::vector<std::size_t> rows{4, 0, 4};
  const auto s = select_rows(m, rows);
  for (Index c = 0; c < 5; ++c) {
    CHECK(s.at(0, c) == m.at(4, c));
    CHECK(s.at(1, c) == m.at(0, c));
    CHECK(s.at(2, c) == m.at(4, c));
  }
}
