#include <benchmark/benchmark.h>

#include "poisonstack/kernels.hpp"
#include "poisonstack/poisoning.hpp"
#include "poisonstack/rng.hpp"

using namespace poisonstack;

namespace {

// Sparse corpus shaped like the desk-scale synthetic runs.
const CsrMatrix& corpus() {
  static const CsrMatrix m = [] {
    SyntheticSpec spec;
    spec.n_samples = 4000;
    spec.n_features = 2000;
    spec.n_classes = 5;
    spec.signal_columns = 40;
    spec.seed = 1;
    return make_synthetic_dataset(spec).sparse();
  }();
  return m;
}

const CsrMatrix& corpus_t() {
  static const CsrMatrix t = transpose(corpus());
  return t;
}

DenseMatrix random_dense(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix d(rows, cols);
  for (double& v : d.values()) v = rng.normal();
  return d;
}

std::vector<double> random_vector(Index n) {
  Rng rng(7);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <void (*Kernel)(const CsrMatrix&, std::span<const double>, std::span<double>)>
void BM_spmv(benchmark::State& state) {
  const auto& m = corpus();
  const auto v = random_vector(m.n_cols());
  std::vector<double> out(m.n_rows());
  for (auto _ : state) {
    Kernel(m, v, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.nnz()));
}

void BM_spmv_transpose_serial(benchmark::State& state) {
  const auto& m = corpus();
  const auto v = random_vector(m.n_rows());
  std::vector<double> out(m.n_cols());
  for (auto _ : state) {
    kernels::serial::spmv_transpose(m, v, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.nnz()));
}

void BM_spmv_transpose_parallel(benchmark::State& state) {
  const auto& t = corpus_t();
  const auto v = random_vector(t.n_cols());
  std::vector<double> out(t.n_rows());
  for (auto _ : state) {
    kernels::parallel::spmv_transpose(t, v, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.nnz()));
}

template <void (*Kernel)(const CsrMatrix&, const DenseMatrix&, DenseMatrix&)>
void BM_csr_dense(benchmark::State& state) {
  const auto& m = corpus();
  const auto b = random_dense(m.n_cols(), state.range(0), 3);
  DenseMatrix out(m.n_rows(), b.n_cols());
  for (auto _ : state) {
    Kernel(m, b, out);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.nnz() * b.n_cols()));
}

void BM_csr_transpose_dense_serial(benchmark::State& state) {
  const auto& m = corpus();
  const auto b = random_dense(m.n_rows(), state.range(0), 4);
  DenseMatrix out(m.n_cols(), b.n_cols());
  for (auto _ : state) {
    kernels::serial::csr_transpose_dense(m, b, out);
    benchmark::DoNotOptimize(out.values().data());
  }
}

void BM_csr_transpose_dense_parallel(benchmark::State& state) {
  const auto& t = corpus_t();
  const auto b = random_dense(t.n_cols(), state.range(0), 4);
  DenseMatrix out(t.n_rows(), b.n_cols());
  for (auto _ : state) {
    kernels::parallel::csr_transpose_dense(t, b, out);
    benchmark::DoNotOptimize(out.values().data());
  }
}

template <void (*Kernel)(const DenseMatrix&, const DenseMatrix&, DenseMatrix&)>
void BM_gemm(benchmark::State& state) {
  const Index n = state.range(0);
  const auto a = random_dense(n, n, 5);
  const auto b = random_dense(n, n, 6);
  DenseMatrix out(n, n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void BM_perturb_features(benchmark::State& state) {
  Dataset ds;
  ds.features = corpus();
  ds.labels.assign(corpus().n_rows(), 0);
  ds.n_classes = 1;
  for (auto _ : state) benchmark::DoNotOptimize(perturb_features(ds, 0.2, 9));
}

}  // namespace

BENCHMARK(BM_spmv<kernels::serial::spmv>)->Name("spmv/serial");
BENCHMARK(BM_spmv<kernels::parallel::spmv>)->Name("spmv/parallel");
BENCHMARK(BM_spmv_transpose_serial)->Name("spmv_transpose/serial");
BENCHMARK(BM_spmv_transpose_parallel)->Name("spmv_transpose/parallel");
BENCHMARK(BM_csr_dense<kernels::serial::csr_dense>)->Name("csr_dense/serial")->Arg(60);
BENCHMARK(BM_csr_dense<kernels::parallel::csr_dense>)->Name("csr_dense/parallel")->Arg(60);
BENCHMARK(BM_csr_transpose_dense_serial)->Name("csr_transpose_dense/serial")->Arg(60);
BENCHMARK(BM_csr_transpose_dense_parallel)->Name("csr_transpose_dense/parallel")->Arg(60);
BENCHMARK(BM_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<kernels::parallel::gemm>)->Name("gemm/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_perturb_features)->Name("perturb_features")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
