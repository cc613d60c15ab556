#include <algorithm>
#include <cmath>
#include <numbers>

#include "model_impl.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/linalg.hpp"

namespace poisonstack::detail {

namespace {

struct ClassMoments {
  std::vector<double> counts;  // per class
  DenseMatrix means;           // C × D
};

ClassMoments class_means(const FitInput& in) {
  const std::size_t d = in.x.n_cols();
  ClassMoments m{std::vector<double>(in.n_classes, 0.0), DenseMatrix(in.n_classes, d)};
  for (std::size_t i = 0; i < in.x.n_rows(); ++i) {
    const auto c = in.y[i];
    m.counts[c] += 1.0;
    const auto row = in.x.row(i);
    for (std::size_t j = 0; j < d; ++j) m.means(c, j) += row[j];
  }
  for (std::size_t c = 0; c < in.n_classes; ++c)
    for (std::size_t j = 0; j < d; ++j) m.means(c, j) /= m.counts[c];
  return m;
}

// Σ over rows of class `only` (or all rows when only < 0) of (x - μ_y)(x - μ_y)ᵀ.
DenseMatrix scatter(const FitInput& in, const DenseMatrix& means, std::int64_t only) {
  const std::size_t d = in.x.n_cols();
  DenseMatrix s(d, d);
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < in.x.n_rows(); ++i) {
    const auto c = in.y[i];
    if (only >= 0 && c != static_cast<ClassIndex>(only)) continue;
    const auto row = in.x.row(i);
    for (std::size_t j = 0; j < d; ++j) centered[j] = row[j] - means(c, j);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b <= a; ++b) s(a, b) += centered[a] * centered[b];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) s(b, a) = s(a, b);
  return s;
}

// Adds ridge · (mean diagonal) so the shrinkage follows the data's scale.
void regularize(DenseMatrix& cov, double ridge) {
  const std::size_t d = cov.n_rows();
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) trace += cov(j, j);
  const double scale = trace > 0.0 ? trace / static_cast<double>(d) : 1.0;
  for (std::size_t j = 0; j < d; ++j) cov(j, j) += ridge * scale;
}

DenseMatrix pooled_covariance(const FitInput& in, const DenseMatrix& means, double ridge) {
  auto cov = scatter(in, means, -1);
  const double dof = std::max<double>(1.0, static_cast<double>(in.x.n_rows() - in.n_classes));
  for (double& v : cov.values()) v /= dof;
  regularize(cov, ridge);
  return cov;
}

DenseMatrix factor(const DenseMatrix& cov) {
  try {
    return linalg::cholesky(cov);
  } catch (const NumericError&) {
    throw NumericError("covariance is not positive definite after regularisation");
  }
}

class QdaModel final : public ModelImpl {
 public:
  struct Component {
    std::vector<double> mean;
    DenseMatrix chol;
    double log_det;
    double log_prior;
  };

  explicit QdaModel(std::vector<Component> comps) : comps_(std::move(comps)) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    const std::size_t d = comps_.front().mean.size();
    DenseMatrix z(x.n_rows(), comps_.size());
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < x.n_rows(); ++i) {
      const auto row = x.row(i);
      for (std::size_t c = 0; c < comps_.size(); ++c) {
        const auto& k = comps_[c];
        for (std::size_t j = 0; j < d; ++j) centered[j] = row[j] - k.mean[j];
        const auto w = linalg::forward_substitute(k.chol, centered);
        z(i, c) = -0.5 * linalg::dot(w, w) - 0.5 * k.log_det + k.log_prior;
      }
    }
    softmax_rows(z);
    return z;
  }

  void encode(ByteWriter& w) const override {
    w.u64(comps_.size());
    for (const auto& k : comps_) {
      write_doubles(w, k.mean);
      write_doubles(w, k.chol.values());
      w.f64(k.log_det);
      w.f64(k.log_prior);
    }
  }

  static ImplPtr decode(ByteReader& r) {
    const auto count = r.u64();
    if (count == 0 || count > r.remaining()) throw FormatError("qda component count invalid");
    std::vector<Component> comps;
    for (std::uint64_t c = 0; c < count; ++c) {
      auto mean = read_doubles(r);
      auto chol = read_doubles(r);
      const std::size_t d = mean.size();
      if (chol.size() != d * d || (!comps.empty() && d != comps.front().mean.size()))
        throw FormatError("qda component shape mismatch");
      const double log_det = r.f64();
      const double log_prior = r.f64();
      comps.push_back({std::move(mean), DenseMatrix(d, d, std::move(chol)), log_det, log_prior});
    }
    return std::make_shared<QdaModel>(std::move(comps));
  }

 private:
  std::vector<Component> comps_;
};

class NaiveBayesModel final : public ModelImpl {
 public:
  NaiveBayesModel(DenseMatrix means, DenseMatrix vars, std::vector<double> log_priors)
      : means_(std::move(means)), vars_(std::move(vars)), log_priors_(std::move(log_priors)) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    const std::size_t c = means_.n_rows();
    const std::size_t d = means_.n_cols();
    DenseMatrix z(x.n_rows(), c);
    for (std::size_t i = 0; i < x.n_rows(); ++i) {
      const auto row = x.row(i);
      for (std::size_t k = 0; k < c; ++k) {
        double s = log_priors_[k];
        for (std::size_t j = 0; j < d; ++j) {
          const double var = vars_(k, j);
          const double diff = row[j] - means_(k, j);
          s -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + diff * diff / var);
        }
        z(i, k) = s;
      }
    }
    softmax_rows(z);
    return z;
  }

  void encode(ByteWriter& w) const override {
    w.u64(means_.n_rows());
    w.u64(means_.n_cols());
    write_doubles(w, means_.values());
    write_doubles(w, vars_.values());
    write_doubles(w, log_priors_);
  }

  static ImplPtr decode(ByteReader& r) {
    const auto c = r.u64();
    const auto d = r.u64();
    auto means = read_doubles(r);
    auto vars = read_doubles(r);
    auto priors = read_doubles(r);
    if (means.size() != c * d || vars.size() != c * d || priors.size() != c)
      throw FormatError("naive bayes shape mismatch");
    return std::make_shared<NaiveBayesModel>(DenseMatrix(c, d, std::move(means)),
                                             DenseMatrix(c, d, std::move(vars)),
                                             std::move(priors));
  }

 private:
  DenseMatrix means_, vars_;
  std::vector<double> log_priors_;
};

}  // namespace

ImplPtr fit_lda(const LdaParams& p, const FitInput& in) {
  const std::size_t c = in.n_classes;
  const std::size_t d = in.x.n_cols();
  const auto m = class_means(in);
  const auto chol = factor(pooled_covariance(in, m.means, p.ridge));
  const double n = static_cast<double>(in.x.n_rows());

  // Scores are linear: x·Σ⁻¹μ_c - ½ μ_cᵀΣ⁻¹μ_c + log π_c.
  std::vector<double> params(c * d + c);
  for (std::size_t k = 0; k < c; ++k) {
    const auto mu = m.means.row(k);
    const auto a = linalg::cholesky_solve(chol, mu);
    std::copy(a.begin(), a.end(), params.begin() + k * d);
    params[c * d + k] = -0.5 * linalg::dot(a, mu) + std::log(m.counts[k] / n);
  }
  return make_linear_model(c, d, std::move(params));
}

ImplPtr fit_qda(const QdaParams& p, const FitInput& in) {
  const auto m = class_means(in);
  const double n = static_cast<double>(in.x.n_rows());
  std::vector<QdaModel::Component> comps;
  DenseMatrix shared;
  if (p.shared_covariance) shared = factor(pooled_covariance(in, m.means, p.ridge));
  for (std::size_t k = 0; k < in.n_classes; ++k) {
    DenseMatrix chol;
    if (p.shared_covariance) {
      chol = shared;
    } else {
      auto cov = scatter(in, m.means, static_cast<std::int64_t>(k));
      const double dof = std::max(1.0, m.counts[k] - 1.0);
      for (double& v : cov.values()) v /= dof;
      regularize(cov, p.ridge);
      chol = factor(cov);
    }
    const auto mu = m.means.row(k);
    const double log_det = linalg::cholesky_log_det(chol);
    comps.push_back({std::vector<double>(mu.begin(), mu.end()), std::move(chol), log_det,
                     std::log(m.counts[k] / n)});
  }
  return std::make_shared<QdaModel>(std::move(comps));
}

ImplPtr fit_gaussian_nb(const GaussianNbParams& p, const FitInput& in) {
  const std::size_t c = in.n_classes;
  const std::size_t d = in.x.n_cols();
  const std::size_t n = in.x.n_rows();
  const auto m = class_means(in);

  // Variance floor: var_smoothing times the largest column variance.
  double max_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += in.x(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += (in.x(i, j) - mean) * (in.x(i, j) - mean);
    max_var = std::max(max_var, sq / static_cast<double>(n));
  }
  const double epsilon = p.var_smoothing * (max_var > 0.0 ? max_var : 1.0);

  DenseMatrix vars(c, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = in.y[i];
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = in.x(i, j) - m.means(k, j);
      vars(k, j) += diff * diff;
    }
  }
  std::vector<double> log_priors(c);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < d; ++j) vars(k, j) = vars(k, j) / m.counts[k] + epsilon;
    log_priors[k] = std::log(m.counts[k] / static_cast<double>(n));
  }
  return std::make_shared<NaiveBayesModel>(m.means, std::move(vars), std::move(log_priors));
}

ImplPtr decode_lda_model(ByteReader& r) { return decode_linear_model(r); }
ImplPtr decode_qda_model(ByteReader& r) { return QdaModel::decode(r); }
ImplPtr decode_nb_model(ByteReader& r) { return NaiveBayesModel::decode(r); }

}  // namespace poisonstack::detail
