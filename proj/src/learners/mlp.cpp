#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_impl.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

namespace {

struct Layout {
  std::size_t d, h, c;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return h * d; }
  std::size_t w2() const { return h * d + h; }
  std::size_t b2() const { return h * d + h + c * h; }
  std::size_t size() const { return b2() + c; }
};

// Hidden ReLU activations and softmax outputs for one row.
void forward(const Layout& L, const double* p, std::span<const double> row, double* hidden,
             double* out) {
  for (std::size_t u = 0; u < L.h; ++u) {
    const double* w = p + L.w1() + u * L.d;
    double s = p[L.b1() + u];
    for (std::size_t j = 0; j < L.d; ++j) s += w[j] * row[j];
    hidden[u] = s > 0.0 ? s : 0.0;
  }
  double zmax = -INFINITY;
  for (std::size_t k = 0; k < L.c; ++k) {
    const double* w = p + L.w2() + k * L.h;
    double s = p[L.b2() + k];
    for (std::size_t u = 0; u < L.h; ++u) s += w[u] * hidden[u];
    out[k] = s;
    zmax = std::max(zmax, s);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < L.c; ++k) {
    out[k] = std::exp(out[k] - zmax);
    sum += out[k];
  }
  for (std::size_t k = 0; k < L.c; ++k) out[k] /= sum;
}

// Mean cross-entropy over `rows` plus l2/(2·|rows|)·(|W1|² + |W2|²).
double batch_loss(const Layout& L, std::span<const double> params, const DenseMatrix& x,
                  std::span<const std::uint32_t> y, std::span<const std::size_t> rows, double l2,
                  std::span<double> grad) {
  const double* p = params.data();
  std::vector<double> hidden(L.h), out(L.c), dh(L.h);
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t r : rows) {
    const auto row = x.row(r);
    forward(L, p, row, hidden.data(), out.data());
    loss -= std::log(std::max(out[y[r]], 1e-300));
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t k = 0; k < L.c; ++k) {
      const double delta = out[k] - (y[r] == k ? 1.0 : 0.0);
      double* gw = grad.data() + L.w2() + k * L.h;
      const double* w = p + L.w2() + k * L.h;
      for (std::size_t u = 0; u < L.h; ++u) {
        gw[u] += delta * hidden[u];
        dh[u] += delta * w[u];
      }
      grad[L.b2() + k] += delta;
    }
    for (std::size_t u = 0; u < L.h; ++u) {
      if (hidden[u] <= 0.0) continue;
      double* gw = grad.data() + L.w1() + u * L.d;
      for (std::size_t j = 0; j < L.d; ++j) gw[j] += dh[u] * row[j];
      grad[L.b1() + u] += dh[u];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double w_sq = 0.0;
  auto regularize = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      w_sq += p[i] * p[i];
      grad[i] = grad[i] * inv_n + l2 * inv_n * p[i];
    }
  };
  regularize(L.w1(), L.b1());
  regularize(L.w2(), L.b2());
  for (std::size_t i = L.b1(); i < L.w2(); ++i) grad[i] *= inv_n;
  for (std::size_t i = L.b2(); i < L.size(); ++i) grad[i] *= inv_n;
  return loss * inv_n + 0.5 * l2 * inv_n * w_sq;
}

}  // namespace

namespace objectives {

std::size_t mlp_parameter_count(std::size_t n_features, std::size_t hidden, std::size_t n_classes) {
  return Layout{n_features, hidden, n_classes}.size();
}

double mlp_loss(std::span<const double> params, const DenseMatrix& x,
                std::span<const std::uint32_t> y, std::size_t n_classes, std::size_t hidden,
                double l2, std::span<double> grad) {
  const Layout L{x.n_cols(), hidden, n_classes};
  if (params.size() != L.size()) throw DimensionError("mlp parameter length mismatch");
  std::vector<std::size_t> rows(x.n_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<double> scratch;
  if (grad.empty()) {
    scratch.resize(L.size());
    grad = scratch;
  }
  return batch_loss(L, params, x, y, rows, l2, grad);
}

}  // namespace objectives

namespace detail {

namespace {

class MlpModel final : public ModelImpl {
 public:
  MlpModel(Layout layout, std::vector<double> params)
      : L_(layout), params_(std::move(params)) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    DenseMatrix out(x.n_rows(), L_.c);
    std::vector<double> hidden(L_.h);
    for (std::size_t i = 0; i < x.n_rows(); ++i)
      forward(L_, params_.data(), x.row(i), hidden.data(), out.row(i).data());
    return out;
  }

  void encode(ByteWriter& w) const override {
    w.u64(L_.d);
    w.u64(L_.h);
    w.u64(L_.c);
    write_doubles(w, params_);
  }

  static ImplPtr decode(ByteReader& r) {
    Layout L{};
    L.d = r.u64();
    L.h = r.u64();
    L.c = r.u64();
    auto params = read_doubles(r);
    if (params.size() != L.size()) throw FormatError("mlp parameter length mismatch");
    return std::make_shared<MlpModel>(L, std::move(params));
  }

 private:
  Layout L_;
  std::vector<double> params_;
};

}  // namespace

ImplPtr fit_mlp(const MlpParams& p, const FitInput& in) {
  const Layout L{in.x.n_cols(), p.hidden_units, in.n_classes};
  const std::size_t n = in.x.n_rows();
  Rng rng(derive_seed(in.seed, "mlp"));

  // Glorot-uniform initialisation, biases included.
  std::vector<double> w(L.size());
  const double bound1 = std::sqrt(6.0 / static_cast<double>(L.d + L.h));
  const double bound2 = std::sqrt(6.0 / static_cast<double>(L.h + L.c));
  for (std::size_t i = 0; i < L.w2(); ++i) w[i] = rng.uniform(-bound1, bound1);
  for (std::size_t i = L.w2(); i < L.size(); ++i) w[i] = rng.uniform(-bound2, bound2);

  std::vector<double> m(L.size(), 0.0), v(L.size(), 0.0), g(L.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::clamp<std::size_t>(p.batch_size, 1, n);

  double best = INFINITY;
  std::size_t stale = 0;
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < p.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      epoch_loss += batch_loss(L, w, in.x, in.y, rows, p.l2, g) * static_cast<double>(rows.size());
      ++t;
      const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
      const double lr = p.learning_rate * std::sqrt(c2) / c1;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
        w[i] -= lr * m[i] / (std::sqrt(v[i]) + p.epsilon);
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw NumericError("mlp training loss became non-finite");
    if (epoch_loss > best - p.tol) {
      if (++stale >= p.n_iter_no_change) break;
    } else {
      stale = 0;
    }
    best = std::min(best, epoch_loss);
  }
  return std::make_shared<MlpModel>(L, std::move(w));
}

ImplPtr decode_mlp_model(ByteReader& r) { return MlpModel::decode(r); }

}  // namespace detail

}  // namespace poisonstack
