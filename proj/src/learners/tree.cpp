#include "tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poisonstack/errors.hpp"

namespace poisonstack::detail {

std::span<const double> Tree::evaluate(std::span<const double> row) const {
  std::uint32_t node = 0;
  while (nodes[node].feature >= 0) {
    const auto& n = nodes[node];
    node = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return {values.data() + node * width, width};
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

void Tree::encode(ByteWriter& w) const {
  w.u64(width);
  w.u64(nodes.size());
  for (const auto& n : nodes) {
    w.u64(static_cast<std::uint64_t>(n.feature));
    w.f64(n.threshold);
    w.u32(n.left);
    w.u32(n.right);
  }
  w.array(std::span<const double>(values));
}

Tree Tree::decode(ByteReader& r) {
  Tree t;
  t.width = r.u64();
  const auto count = r.u64();
  if (count == 0) throw FormatError("tree without nodes");
  if (count > r.remaining()) throw TruncationError("tree node table runs past end of data");
  t.nodes.resize(count);
  for (auto& n : t.nodes) {
    n.feature = static_cast<std::int64_t>(r.u64());
    n.threshold = r.f64();
    n.left = r.u32();
    n.right = r.u32();
    if (n.feature >= 0 && (n.left >= count || n.right >= count))
      throw FormatError("tree child index out of range");
  }
  t.values = r.array<double>(count * t.width);
  return t;
}

namespace {

struct SortedColumn {
  std::vector<std::pair<double, std::size_t>> entries;

  void load(const DenseMatrix& x, std::size_t feature, std::span<const std::size_t> rows) {
    entries.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) entries[i] = {x(rows[i], feature), rows[i]};
    std::sort(entries.begin(), entries.end());
  }
  bool constant() const { return entries.empty() || entries.front().first == entries.back().first; }
};

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m < b ? m : a;
}

struct Split {
  std::int64_t feature = -1;
  double threshold = 0.0;
  double score = -1.0;
};

class ClassificationBuilder {
 public:
  ClassificationBuilder(const DenseMatrix& x, std::span<const ClassIndex> y, std::size_t n_classes,
                        std::span<const double> weights, const TreeParams& params, Rng& rng)
      : x_(x), y_(y), n_classes_(n_classes), weights_(weights), params_(params), rng_(rng) {
    tree_.width = n_classes;
    const std::size_t m = x.n_cols();
    max_features_ = params.max_features ? std::clamp<std::size_t>(*params.max_features, 1, m) : m;
  }

  Tree build() {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y_.size(); ++i)
      if (weights_[i] > 0.0) rows.push_back(i);
    if (rows.empty()) throw DimensionError("tree needs at least one weighted sample");
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.values.resize(tree_.values.size() + n_classes_, 0.0);

    std::vector<double> counts(n_classes_, 0.0);
    double total = 0.0;
    for (std::size_t r : rows) {
      counts[y_[r]] += weights_[r];
      total += weights_[r];
    }
    for (std::size_t c = 0; c < n_classes_; ++c)
      tree_.values[id * n_classes_ + c] = counts[c] / total;

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double v) { return v > 0; }) <= 1;
    if (pure || rows.size() < params_.min_samples_split ||
        (params_.max_depth && depth >= params_.max_depth))
      return id;

    const Split best = find_split(rows, counts, total);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x_(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree_.nodes[id].feature = best.feature;
    tree_.nodes[id].threshold = best.threshold;
    const auto l = grow(left, depth + 1);
    const auto rr = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rr;
    return id;
  }

  Split find_split(std::span<const std::size_t> rows, const std::vector<double>& counts,
                   double total) {
    const std::size_t m = x_.n_cols();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool sampled = max_features_ < m;
    if (sampled) rng_.shuffle(order);

    Split best;
    std::size_t visited = 0;
    std::vector<double> left(n_classes_);
    for (std::size_t f : order) {
      if (sampled && visited >= max_features_) break;
      column_.load(x_, f, rows);
      if (column_.constant()) continue;
      ++visited;

      std::fill(left.begin(), left.end(), 0.0);
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (double c : counts) right_sq += c * c;
      double w_left = 0.0;
      const auto& e = column_.entries;
      for (std::size_t j = 0; j + 1 < e.size(); ++j) {
        const std::size_t r = e[j].second;
        const double w = weights_[r];
        const auto c = y_[r];
        const double before_l = left[c];
        const double before_r = counts[c] - before_l;
        left[c] += w;
        left_sq += left[c] * left[c] - before_l * before_l;
        right_sq += (before_r - w) * (before_r - w) - before_r * before_r;
        w_left += w;
        if (!(e[j + 1].first > e[j].first)) continue;
        const std::size_t n_left = j + 1;
        if (n_left < params_.min_samples_leaf || e.size() - n_left < params_.min_samples_leaf)
          continue;
        const double w_right = total - w_left;
        if (w_left <= 0.0 || w_right <= 0.0) continue;
        const double score = left_sq / w_left + right_sq / w_right;
        if (score > best.score) {
          best.feature = static_cast<std::int64_t>(f);
          best.threshold = midpoint(e[j].first, e[j + 1].first);
          best.score = score;
        }
      }
    }
    return best;
  }

  const DenseMatrix& x_;
  std::span<const ClassIndex> y_;
  std::size_t n_classes_;
  std::span<const double> weights_;
  TreeParams params_;
  Rng& rng_;
  std::size_t max_features_;
  SortedColumn column_;
  Tree tree_;
};

class RegressionBuilder {
 public:
  RegressionBuilder(const DenseMatrix& x, const std::vector<std::vector<std::uint32_t>>& sorted,
                    std::span<const double> targets, std::size_t max_depth,
                    const std::function<double(std::span<const std::size_t>)>& leaf_value)
      : x_(x), sorted_(sorted), t_(targets), max_depth_(max_depth), leaf_value_(leaf_value),
        in_node_(targets.size(), 0) {
    tree_.width = 1;
  }

  Tree build() {
    std::vector<std::size_t> rows(t_.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.values.push_back(0.0);

    Split best;
    if (rows.size() >= 2 && depth < max_depth_) best = find_split(rows);
    if (best.feature < 0) {
      tree_.values[id] = leaf_value_(rows);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x_(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(r);
    tree_.nodes[id].feature = best.feature;
    tree_.nodes[id].threshold = best.threshold;
    const auto l = grow(left, depth + 1);
    const auto rr = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rr;
    return id;
  }

  Split find_split(std::span<const std::size_t> rows) {
    double total = 0.0;
    for (std::size_t r : rows) {
      total += t_[r];
      in_node_[r] = 1;
    }
    const double n = static_cast<double>(rows.size());
    // A split has to beat the unsplit node's sum²/n.
    Split best;
    best.score = total * total / n * (1.0 + 1e-12) + 1e-300;
    std::vector<std::uint32_t> members;
    members.reserve(rows.size());
    for (std::size_t f = 0; f < x_.n_cols(); ++f) {
      members.clear();
      for (std::uint32_t r : sorted_[f])
        if (in_node_[r]) members.push_back(r);
      double s_left = 0.0;
      for (std::size_t j = 0; j + 1 < members.size(); ++j) {
        s_left += t_[members[j]];
        const double a = x_(members[j], f);
        const double b = x_(members[j + 1], f);
        if (!(b > a)) continue;
        const double nl = static_cast<double>(j + 1);
        const double s_right = total - s_left;
        const double score = s_left * s_left / nl + s_right * s_right / (n - nl);
        if (score > best.score) {
          best.feature = static_cast<std::int64_t>(f);
          best.threshold = midpoint(a, b);
          best.score = score;
        }
      }
    }
    for (std::size_t r : rows) in_node_[r] = 0;
    return best;
  }

  const DenseMatrix& x_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  std::span<const double> t_;
  std::size_t max_depth_;
  const std::function<double(std::span<const std::size_t>)>& leaf_value_;
  std::vector<char> in_node_;
  Tree tree_;
};

}  // namespace

Tree grow_classification_tree(const DenseMatrix& x, std::span<const ClassIndex> y,
                              std::size_t n_classes, std::span<const double> weights,
                              const TreeParams& params, Rng& rng) {
  return ClassificationBuilder(x, y, n_classes, weights, params, rng).build();
}

std::vector<std::vector<std::uint32_t>> presort_columns(const DenseMatrix& x) {
  std::vector<std::vector<std::uint32_t>> out(x.n_cols());
  for (std::size_t f = 0; f < x.n_cols(); ++f) {
    auto& order = out[f];
    order.resize(x.n_rows());
    std::iota(order.begin(), order.end(), std::uint32_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return out;
}

Tree grow_regression_tree(const DenseMatrix& x, const std::vector<std::vector<std::uint32_t>>& sorted,
                          std::span<const double> targets, std::size_t max_depth,
                          const std::function<double(std::span<const std::size_t>)>& leaf_value) {
  return RegressionBuilder(x, sorted, targets, max_depth, leaf_value).build();
}

namespace {

// One tree or an averaged ensemble of trees. Members may see a column subset,
// recorded as `feature_maps[t]` (empty = all columns).
class TreeEnsembleModel final : public ModelImpl {
 public:
  TreeEnsembleModel(std::vector<Tree> trees, std::vector<std::vector<std::uint64_t>> feature_maps,
                    std::size_t n_classes)
      : trees_(std::move(trees)), maps_(std::move(feature_maps)), n_classes_(n_classes) {}

  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    DenseMatrix out(x.n_rows(), n_classes_);
    const auto n = static_cast<std::int64_t>(x.n_rows());
    const double scale = 1.0 / static_cast<double>(trees_.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      auto dst = out.row(i);
      std::vector<double> sub;
      for (std::size_t t = 0; t < trees_.size(); ++t) {
        std::span<const double> row = x.row(i);
        if (!maps_[t].empty()) {
          sub.resize(maps_[t].size());
          for (std::size_t j = 0; j < sub.size(); ++j) sub[j] = row[maps_[t][j]];
          row = sub;
        }
        const auto leaf = trees_[t].evaluate(row);
        for (std::size_t c = 0; c < n_classes_; ++c) dst[c] += leaf[c];
      }
      for (double& v : dst) v *= scale;
    }
    return out;
  }

  void encode(ByteWriter& w) const override {
    w.u64(n_classes_);
    w.u64(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      w.u64(maps_[t].size());
      w.array(std::span<const std::uint64_t>(maps_[t]));
      trees_[t].encode(w);
    }
  }

  static ImplPtr decode(ByteReader& r) {
    const auto n_classes = r.u64();
    const auto count = r.u64();
    if (count == 0) throw FormatError("tree ensemble without members");
    if (count > r.remaining()) throw TruncationError("tree ensemble runs past end of data");
    std::vector<Tree> trees;
    std::vector<std::vector<std::uint64_t>> maps;
    for (std::uint64_t t = 0; t < count; ++t) {
      maps.push_back(r.array<std::uint64_t>(r.u64()));
      trees.push_back(Tree::decode(r));
      if (trees.back().width != n_classes) throw FormatError("tree width mismatch");
    }
    return std::make_shared<TreeEnsembleModel>(std::move(trees), std::move(maps), n_classes);
  }

 private:
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint64_t>> maps_;
  std::size_t n_classes_;
};

std::vector<double> bootstrap_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[rng.below(n)] += 1.0;
  return w;
}

}  // namespace

ImplPtr fit_decision_tree(const TreeParams& p, const FitInput& in) {
  Rng rng(derive_seed(in.seed, "decision-tree"));
  std::vector<double> w(in.y.size(), 1.0);
  std::vector<Tree> trees;
  trees.push_back(grow_classification_tree(in.x, in.y, in.n_classes, w, p, rng));
  return std::make_shared<TreeEnsembleModel>(std::move(trees),
                                             std::vector<std::vector<std::uint64_t>>(1),
                                             in.n_classes);
}

ImplPtr fit_random_forest(const RandomForestParams& p, const FitInput& in) {
  TreeParams tp = p.tree;
  const std::size_t m = in.x.n_cols();
  tp.max_features = p.max_features
                        ? *p.max_features
                        : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                                       std::sqrt(static_cast<double>(m)))));
  std::vector<Tree> trees(p.n_trees);
  const auto count = static_cast<std::int64_t>(p.n_trees);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t t = 0; t < count; ++t) {
    Rng rng(derive_seed(in.seed, "forest-tree", static_cast<std::uint64_t>(t)));
    const auto w = p.bootstrap ? bootstrap_weights(rng, in.y.size())
                               : std::vector<double>(in.y.size(), 1.0);
    trees[t] = grow_classification_tree(in.x, in.y, in.n_classes, w, tp, rng);
  }
  return std::make_shared<TreeEnsembleModel>(
      std::move(trees), std::vector<std::vector<std::uint64_t>>(p.n_trees), in.n_classes);
}

ImplPtr fit_bagging(const BaggingParams& p, const FitInput& in) {
  const std::size_t m = in.x.n_cols();
  const std::size_t n_sub = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(p.max_features_fraction * static_cast<double>(m))), 1, m);
  std::vector<Tree> trees(p.n_estimators);
  std::vector<std::vector<std::uint64_t>> maps(p.n_estimators);
  const auto count = static_cast<std::int64_t>(p.n_estimators);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t t = 0; t < count; ++t) {
    Rng rng(derive_seed(in.seed, "bagging-member", static_cast<std::uint64_t>(t)));
    const auto w = p.bootstrap ? bootstrap_weights(rng, in.y.size())
                               : std::vector<double>(in.y.size(), 1.0);
    if (n_sub == m) {
      trees[t] = grow_classification_tree(in.x, in.y, in.n_classes, w, p.tree, rng);
      continue;
    }
    auto cols = rng.sample_without_replacement(m, n_sub);
    std::sort(cols.begin(), cols.end());
    DenseMatrix sub(in.x.n_rows(), n_sub);
    for (std::size_t r = 0; r < in.x.n_rows(); ++r)
      for (std::size_t j = 0; j < n_sub; ++j) sub(r, j) = in.x(r, cols[j]);
    trees[t] = grow_classification_tree(sub, in.y, in.n_classes, w, p.tree, rng);
    maps[t].assign(cols.begin(), cols.end());
  }
  return std::make_shared<TreeEnsembleModel>(std::move(trees), std::move(maps), in.n_classes);
}

ImplPtr decode_tree_model(ByteReader& r) { return TreeEnsembleModel::decode(r); }
ImplPtr decode_forest_model(ByteReader& r) { return TreeEnsembleModel::decode(r); }

}  // namespace poisonstack::detail
