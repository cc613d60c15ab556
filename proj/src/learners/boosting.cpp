#include <algorithm>
#include <cmath>

#include "model_impl.hpp"
#include "poisonstack/errors.hpp"
#include "tree.hpp"

namespace poisonstack::detail {

namespace {

class BoostingModel final : public ModelImpl {
 public:
  BoostingModel(std::vector<double> init, double learning_rate, std::vector<Tree> trees)
      : init_(std::move(init)), lr_(learning_rate), trees_(std::move(trees)) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    const std::size_t k = init_.size();
    DenseMatrix f(x.n_rows(), k);
    const auto n = static_cast<std::int64_t>(x.n_rows());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      auto dst = f.row(i);
      std::copy(init_.begin(), init_.end(), dst.begin());
      for (std::size_t t = 0; t < trees_.size(); ++t)
        dst[t % k] += lr_ * trees_[t].evaluate(x.row(i))[0];
    }
    softmax_rows(f);
    return f;
  }

  void encode(ByteWriter& w) const override {
    write_doubles(w, init_);
    w.f64(lr_);
    w.u64(trees_.size());
    for (const auto& t : trees_) t.encode(w);
  }

  static ImplPtr decode(ByteReader& r) {
    auto init = read_doubles(r);
    const double lr = r.f64();
    const auto count = r.u64();
    if (init.empty() || count % init.size() != 0) throw FormatError("boosting tree count mismatch");
    if (count > r.remaining()) throw TruncationError("boosting trees run past end of data");
    std::vector<Tree> trees;
    trees.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t) trees.push_back(Tree::decode(r));
    return std::make_shared<BoostingModel>(std::move(init), lr, std::move(trees));
  }

 private:
  std::vector<double> init_;
  double lr_;
  std::vector<Tree> trees_;  // stage-major: trees_[stage * K + k]
};

}  // namespace

ImplPtr fit_gradient_boosting(const GradientBoostingParams& p, const FitInput& in) {
  const std::size_t n = in.x.n_rows();
  const std::size_t k = in.n_classes;
  std::vector<double> init(k, 0.0);
  for (auto c : in.y) init[c] += 1.0;
  for (double& v : init) v = std::log(v / static_cast<double>(n));

  DenseMatrix f(n, k);
  for (std::size_t i = 0; i < n; ++i) std::copy(init.begin(), init.end(), f.row(i).begin());

  const double factor = static_cast<double>(k - 1) / static_cast<double>(k);
  std::vector<Tree> trees(p.n_stages * k);
  const auto sorted = presort_columns(in.x);
  DenseMatrix prob(n, k);
  for (std::size_t stage = 0; stage < p.n_stages; ++stage) {
    prob = f;
    softmax_rows(prob);
    const auto kk = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t c = 0; c < kk; ++c) {
      std::vector<double> residual(n), hess(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double pc = prob(i, c);
        residual[i] = (in.y[i] == static_cast<ClassIndex>(c) ? 1.0 : 0.0) - pc;
        hess[i] = pc * (1.0 - pc);
      }
      // One Newton step per leaf on the multinomial deviance.
      const auto leaf = [&](std::span<const std::size_t> rows) {
        double num = 0.0, den = 0.0;
        for (std::size_t r : rows) {
          num += residual[r];
          den += hess[r];
        }
        return den < 1e-150 ? 0.0 : factor * num / den;
      };
      trees[stage * k + c] = grow_regression_tree(in.x, sorted, residual, p.max_depth, leaf);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c)
        f(i, c) += p.learning_rate * trees[stage * k + c].evaluate(in.x.row(i))[0];
  }
  return std::make_shared<BoostingModel>(std::move(init), p.learning_rate, std::move(trees));
}

ImplPtr decode_boosting_model(ByteReader& r) { return BoostingModel::decode(r); }

}  // namespace poisonstack::detail
