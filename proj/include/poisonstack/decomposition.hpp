#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poisonstack/matrix.hpp"

namespace poisonstack {

struct SvdOptions {
  Index oversample = 10;
  // Minimum number of power iterations. Iteration continues past it until the
  // top-k singular value estimates change by less than `convergence_tol`
  // (relative) between passes, up to `max_power_iterations`.
  int power_iterations = 5;
  int max_power_iterations = 300;
  double convergence_tol = 1e-13;
  // Column-mean centering; rejected for sparse input because it densifies.
  bool center = false;
};

// Fitted rank-k projection. Rows of `components` are orthonormal right
// singular vectors; each row is sign-normalized so its largest-magnitude
// entry is positive.
struct SvdModel {
  Index k = 0;
  DenseMatrix components;  // k × M
  std::vector<double> singular_values;
  std::uint64_t fit_seed = 0;
  Index oversample = 0;
  int power_iterations = 0;  // passes actually run
  std::vector<double> column_means;  // empty unless centered

  bool operator==(const SvdModel&) const = default;
};

// Randomized range finder: Gaussian test matrix of width k+p drawn from
// `seed`, power iterations with QR re-orthonormalization on every pass, exact
// SVD of the projected problem, truncation to k. Throws DimensionError / NumericError.
SvdModel fit_truncated_svd(const CsrMatrix& x, Index k, std::uint64_t seed,
                           const SvdOptions& options = {});
SvdModel fit_truncated_svd(const DenseMatrix& x, Index k, std::uint64_t seed,
                           const SvdOptions& options = {});

// x · componentsᵀ (after centering when the model is centered).
DenseMatrix transform(const SvdModel& model, const CsrMatrix& x);
DenseMatrix transform(const SvdModel& model, const DenseMatrix& x);

// σᵢ² / ‖x‖_F², one entry per component.
std::vector<double> explained_variance_ratio(const SvdModel& model, const CsrMatrix& x);

// ‖x − (x Vᵀ) V‖_F.
double reconstruction_error(const SvdModel& model, const CsrMatrix& x);

// Stored as a dense PSDS container (components as features) followed by the
// singular-value section.
std::vector<std::uint8_t> encode_svd_model(const SvdModel& model);
SvdModel decode_svd_model(std::span<const std::uint8_t> bytes);
void save_svd_model(const SvdModel& model, const std::string& path);
SvdModel load_svd_model(const std::string& path);

}  // namespace poisonstack
