#include "poisonstack/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/ingest.hpp"
#include "poisonstack/kernels.hpp"
#include "poisonstack/linalg.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

namespace {

// The two products the range finder needs, independent of storage.
struct LinearOperator {
  Index n_rows;
  Index n_cols;
  std::function<DenseMatrix(const DenseMatrix&)> apply;            // X · B
  std::function<DenseMatrix(const DenseMatrix&)> apply_transpose;  // Xᵀ · B
};

void check_k(Index n_rows, Index n_cols, Index k) {
  const Index limit = std::min(n_rows, n_cols);
  if (k < 1 || k > limit)
    throw DimensionError("svd rank k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(limit) + "]");
}

void sign_normalize(DenseMatrix& components) {
  for (Index r = 0; r < components.n_rows(); ++r) {
    auto row = components.row(r);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (std::abs(row[j]) > std::abs(row[arg])) arg = j;
    if (!row.empty() && row[arg] < 0.0)
      for (double& v : row) v = -v;
  }
}

SvdModel fit_operator(const LinearOperator& op, Index k, std::uint64_t seed,
                      const SvdOptions& options) {
  const Index width = std::min(k + options.oversample, std::min(op.n_rows, op.n_cols));

  Rng rng(seed);
  DenseMatrix omega(op.n_cols, width);
  for (double& v : omega.values()) v = rng.normal();

  DenseMatrix q = linalg::orthonormalize(op.apply(omega));
  linalg::Svd svd = linalg::jacobi_svd(op.apply_transpose(q));
  int passes = 0;
  while (passes < options.max_power_iterations) {
    const DenseMatrix z = linalg::orthonormalize(op.apply_transpose(q));
    q = linalg::orthonormalize(op.apply(z));
    // Bᵀ = Xᵀ Q (M × width); its left singular vectors are X's right ones.
    linalg::Svd next = linalg::jacobi_svd(op.apply_transpose(q));
    ++passes;
    double change = 0.0;
    const double scale = std::max(next.singular_values[0], 1e-300);
    for (Index i = 0; i < k; ++i) {
      const double denom = std::max(next.singular_values[i], scale * 1e-8);
      change = std::max(change, std::abs(next.singular_values[i] - svd.singular_values[i]) / denom);
    }
    svd = std::move(next);
    if (passes >= options.power_iterations && change <= options.convergence_tol) break;
  }

  SvdModel model;
  model.k = k;
  model.components = DenseMatrix(k, op.n_cols);
  model.singular_values.assign(svd.singular_values.begin(), svd.singular_values.begin() + k);
  for (Index c = 0; c < k; ++c)
    for (Index j = 0; j < op.n_cols; ++j) model.components(c, j) = svd.u(j, c);
  sign_normalize(model.components);
  model.fit_seed = seed;
  model.oversample = options.oversample;
  model.power_iterations = passes;
  return model;
}

void check_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("non-finite value in svd input");
}

}  // namespace

SvdModel fit_truncated_svd(const CsrMatrix& x, Index k, std::uint64_t seed,
                           const SvdOptions& options) {
  if (options.center)
    throw DimensionError("centering is only supported for dense input");
  check_k(x.n_rows(), x.n_cols(), k);
  check_finite(x.values());
  const CsrMatrix xt = transpose(x);
  LinearOperator op{
      x.n_rows(), x.n_cols(),
      [&](const DenseMatrix& b) {
        DenseMatrix out(x.n_rows(), b.n_cols());
        kernels::parallel::csr_dense(x, b, out);
        return out;
      },
      [&](const DenseMatrix& b) {
        DenseMatrix out(x.n_cols(), b.n_cols());
        kernels::parallel::csr_transpose_dense(xt, b, out);
        return out;
      }};
  return fit_operator(op, k, seed, options);
}

SvdModel fit_truncated_svd(const DenseMatrix& x, Index k, std::uint64_t seed,
                           const SvdOptions& options) {
  check_k(x.n_rows(), x.n_cols(), k);
  check_finite(x.values());
  DenseMatrix work = x;
  std::vector<double> means;
  if (options.center) {
    means.assign(x.n_cols(), 0.0);
    for (Index r = 0; r < x.n_rows(); ++r)
      for (Index c = 0; c < x.n_cols(); ++c) means[c] += x(r, c);
    for (double& m : means) m /= static_cast<double>(x.n_rows());
    for (Index r = 0; r < x.n_rows(); ++r)
      for (Index c = 0; c < x.n_cols(); ++c) work(r, c) -= means[c];
  }
  const DenseMatrix wt = transpose(work);
  LinearOperator op{work.n_rows(), work.n_cols(),
                    [&](const DenseMatrix& b) { return multiply(work, b); },
                    [&](const DenseMatrix& b) { return multiply(wt, b); }};
  SvdModel model = fit_operator(op, k, seed, options);
  model.column_means = std::move(means);
  return model;
}

DenseMatrix transform(const SvdModel& model, const CsrMatrix& x) {
  if (x.n_cols() != model.components.n_cols())
    throw DimensionError("transform: input has " + std::to_string(x.n_cols()) +
                         " columns, model expects " + std::to_string(model.components.n_cols()));
  if (!model.column_means.empty())
    return transform(model, to_dense(x));
  DenseMatrix out(x.n_rows(), model.k);
  kernels::parallel::csr_dense(x, transpose(model.components), out);
  return out;
}

DenseMatrix transform(const SvdModel& model, const DenseMatrix& x) {
  if (x.n_cols() != model.components.n_cols())
    throw DimensionError("transform: input has " + std::to_string(x.n_cols()) +
                         " columns, model expects " + std::to_string(model.components.n_cols()));
  DenseMatrix work = x;
  if (!model.column_means.empty())
    for (Index r = 0; r < work.n_rows(); ++r)
      for (Index c = 0; c < work.n_cols(); ++c) work(r, c) -= model.column_means[c];
  return multiply(work, transpose(model.components));
}

std::vector<double> explained_variance_ratio(const SvdModel& model, const CsrMatrix& x) {
  const double total = frobenius_norm_squared(x);
  std::vector<double> ratios(model.k, 0.0);
  if (total == 0.0) return ratios;
  for (Index i = 0; i < model.k; ++i)
    ratios[i] = std::clamp(model.singular_values[i] * model.singular_values[i] / total, 0.0, 1.0);
  return ratios;
}

double reconstruction_error(const SvdModel& model, const CsrMatrix& x) {
  const DenseMatrix projected = transform(model, x);
  const DenseMatrix approx = multiply(projected, model.components);
  double s = 0.0;
  for (Index r = 0; r < x.n_rows(); ++r)
    for (Index c = 0; c < x.n_cols(); ++c) {
      const double d = x.at(r, c) - approx(r, c);
      s += d * d;
    }
  return std::sqrt(s);
}

std::vector<std::uint8_t> encode_svd_model(const SvdModel& model) {
  ContainerContents contents;
  contents.dataset.features = model.components;
  contents.dataset.labels.assign(model.k, 0);
  contents.dataset.n_classes = 1;
  contents.dataset.provenance = {DatasetRole::Base, model.fit_seed};
  contents.singular_values = model.singular_values;
  ByteWriter meta;
  meta.u64(model.oversample);
  meta.u32(static_cast<std::uint32_t>(model.power_iterations));
  meta.u64(model.column_means.size());
  meta.array(std::span<const double>(model.column_means));
  contents.metadata = meta.take();
  return encode_container(contents);
}

SvdModel decode_svd_model(std::span<const std::uint8_t> bytes) {
  auto contents = decode_container_sections(bytes);
  if (contents.dataset.is_sparse()) throw FormatError("svd model must hold dense components");
  if (!contents.singular_values || !contents.metadata)
    throw FormatError("svd model container lacks singular-value or metadata section");
  SvdModel model;
  model.components = contents.dataset.dense();
  model.k = model.components.n_rows();
  model.singular_values = std::move(*contents.singular_values);
  if (model.singular_values.size() != model.k)
    throw FormatError("singular value count does not match component rows");
  model.fit_seed = contents.dataset.provenance.seed;
  ByteReader meta(*contents.metadata);
  model.oversample = meta.u64();
  model.power_iterations = static_cast<int>(meta.u32());
  model.column_means = meta.array<double>(meta.u64());
  return model;
}

void save_svd_model(const SvdModel& model, const std::string& path) {
  write_file(path, encode_svd_model(model));
}

SvdModel load_svd_model(const std::string& path) { return decode_svd_model(read_file(path)); }

}  // namespace poisonstack
