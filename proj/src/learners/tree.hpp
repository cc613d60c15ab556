#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "model_impl.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack::detail {

struct TreeNode {
  std::int64_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

// Binary tree with a fixed-width value vector per node (class distribution
// for classification, one scalar for regression).
struct Tree {
  std::vector<TreeNode> nodes;
  std::size_t width = 0;
  std::vector<double> values;

  std::span<const double> evaluate(std::span<const double> row) const;
  std::size_t depth() const;

  void encode(ByteWriter& w) const;
  static Tree decode(ByteReader& r);
};

// CART with weighted Gini impurity. Rows with zero weight are ignored.
// Splits try `max_features` non-constant features in a random order drawn
// from `rng`; when every feature is tried the natural column order is used and
// `rng` is not consumed. Leaf values are weighted class proportions.
Tree grow_classification_tree(const DenseMatrix& x, std::span<const ClassIndex> y,
                              std::size_t n_classes, std::span<const double> weights,
                              const TreeParams& params, Rng& rng);

// Row indices of every column of `x` in ascending value order (ties by row).
std::vector<std::vector<std::uint32_t>> presort_columns(const DenseMatrix& x);

// Least-squares regression tree over all features; leaf values come from
// `leaf_value(rows)`. `sorted` is presort_columns(x).
Tree grow_regression_tree(const DenseMatrix& x, const std::vector<std::vector<std::uint32_t>>& sorted,
                          std::span<const double> targets, std::size_t max_depth,
                          const std::function<double(std::span<const std::size_t>)>& leaf_value);

}  // namespace poisonstack::detail
