#include <algorithm>
#include <cmath>
#include <functional>

#include "model_impl.hpp"
#include "poisonstack/errors.hpp"

namespace poisonstack {

namespace {

// Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
// Stops when the largest gradient component falls below `tol`.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

std::vector<double> minimize(const Objective& f, std::vector<double> x, double tol,
                             std::size_t max_iter) {
  const std::size_t n = x.size();
  std::vector<double> g(n), x_new(n), g_new(n);
  double fx = f(x, g);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    double g_inf = 0.0, g_sq = 0.0;
    for (double v : g) {
      g_inf = std::max(g_inf, std::abs(v));
      g_sq += v * v;
    }
    if (g_inf < tol) break;
    if (!std::isfinite(fx)) throw NumericError("objective became non-finite");

    double f_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] - step * g[i];
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx - 1e-4 * step * g_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    double sy = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = x_new[i] - x[i];
      sy += s * (g_new[i] - g[i]);
      ss += s * s;
    }
    x.swap(x_new);
    g.swap(g_new);
    const bool stalled = fx - f_new <= 1e-15 * std::max(1.0, std::abs(fx));
    fx = f_new;
    if (stalled) break;
    step = sy > 0.0 ? ss / sy : step * 2.0;
  }
  return x;
}

}  // namespace

namespace objectives {

double logistic_loss(std::span<const double> params, const DenseMatrix& x,
                     std::span<const std::uint32_t> y, std::size_t n_classes, double l2,
                     std::span<double> grad) {
  const std::size_t n = x.n_rows();
  const std::size_t d = x.n_cols();
  const std::size_t c = n_classes;
  if (params.size() != c * d + c) throw DimensionError("logistic parameter length mismatch");
  const double* w = params.data();
  const double* b = params.data() + c * d;
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  double loss = 0.0;
  std::vector<double> z(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    double zmax = -INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      double s = b[k];
      for (std::size_t j = 0; j < d; ++j) s += w[k * d + j] * row[j];
      z[k] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    loss += lse - z[y[i]];
    if (!want_grad) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double delta = std::exp(z[k] - lse) - (y[i] == k ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) grad[k * d + j] += delta * row[j];
      grad[c * d + k] += delta;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double w_sq = 0.0;
  for (std::size_t i = 0; i < c * d; ++i) w_sq += w[i] * w[i];
  if (want_grad) {
    for (std::size_t i = 0; i < c * d; ++i) grad[i] = grad[i] * inv_n + l2 * inv_n * w[i];
    for (std::size_t k = 0; k < c; ++k) grad[c * d + k] *= inv_n;
  }
  return loss * inv_n + 0.5 * l2 * inv_n * w_sq;
}

}  // namespace objectives

namespace detail {

namespace {

// Scores z = W x + b, reported through a row softmax.
class LinearModel final : public ModelImpl {
 public:
  LinearModel(std::size_t n_classes, std::size_t n_features, std::vector<double> params)
      : c_(n_classes), d_(n_features), params_(std::move(params)) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    DenseMatrix z(x.n_rows(), c_);
    const double* w = params_.data();
    const double* b = params_.data() + c_ * d_;
    for (std::size_t i = 0; i < x.n_rows(); ++i) {
      const auto row = x.row(i);
      for (std::size_t k = 0; k < c_; ++k) {
        double s = b[k];
        for (std::size_t j = 0; j < d_; ++j) s += w[k * d_ + j] * row[j];
        z(i, k) = s;
      }
    }
    softmax_rows(z);
    return z;
  }

  void encode(ByteWriter& w) const override {
    w.u64(c_);
    w.u64(d_);
    write_doubles(w, params_);
  }

  static ImplPtr decode(ByteReader& r) {
    const auto c = r.u64();
    const auto d = r.u64();
    auto params = read_doubles(r);
    if (params.size() != c * d + c) throw FormatError("linear model parameter length mismatch");
    return std::make_shared<LinearModel>(c, d, std::move(params));
  }

 private:
  std::size_t c_, d_;
  std::vector<double> params_;  // W (c×d) then b (c)
};

// l2/(2N)·|w|² + mean(max(0, 1 - t·(w·x + b))²) for one class against the rest.
double squared_hinge(std::span<const double> wb, const DenseMatrix& x, std::span<const double> t,
                     double l2, std::span<double> grad) {
  const std::size_t n = x.n_rows();
  const std::size_t d = x.n_cols();
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    double m = wb[d];
    for (std::size_t j = 0; j < d; ++j) m += wb[j] * row[j];
    const double slack = 1.0 - t[i] * m;
    if (slack <= 0.0) continue;
    loss += slack * slack;
    const double coef = -2.0 * slack * t[i];
    for (std::size_t j = 0; j < d; ++j) grad[j] += coef * row[j];
    grad[d] += coef;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double w_sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    w_sq += wb[j] * wb[j];
    grad[j] = grad[j] * inv_n + l2 * inv_n * wb[j];
  }
  grad[d] *= inv_n;
  return loss * inv_n + 0.5 * l2 * inv_n * w_sq;
}

}  // namespace

ImplPtr fit_logistic_regression(const LogisticRegressionParams& p, const FitInput& in) {
  const std::size_t c = in.n_classes;
  const std::size_t d = in.x.n_cols();
  auto f = [&](std::span<const double> w, std::span<double> g) {
    return objectives::logistic_loss(w, in.x, in.y, c, p.l2, g);
  };
  auto w = minimize(f, std::vector<double>(c * d + c, 0.0), p.tol, p.max_iter);
  return std::make_shared<LinearModel>(c, d, std::move(w));
}

ImplPtr fit_svm(const SvmParams& p, const FitInput& in) {
  const std::size_t c = in.n_classes;
  const std::size_t n = in.x.n_rows();
  const std::size_t d = in.x.n_cols();
  std::vector<double> params(c * d + c, 0.0);
  const auto kk = static_cast<std::int64_t>(c);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < kk; ++k) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = in.y[i] == static_cast<ClassIndex>(k) ? 1.0 : -1.0;
    auto f = [&](std::span<const double> wb, std::span<double> g) {
      return squared_hinge(wb, in.x, t, p.l2, g);
    };
    const auto wb = minimize(f, std::vector<double>(d + 1, 0.0), p.tol, p.max_iter);
    std::copy(wb.begin(), wb.begin() + d, params.begin() + k * d);
    params[c * d + k] = wb[d];
  }
  return std::make_shared<LinearModel>(c, d, std::move(params));
}

ImplPtr make_linear_model(std::size_t n_classes, std::size_t n_features,
                          std::vector<double> params) {
  return std::make_shared<LinearModel>(n_classes, n_features, std::move(params));
}

ImplPtr decode_linear_model(ByteReader& r) { return LinearModel::decode(r); }

}  // namespace detail

}  // namespace poisonstack
