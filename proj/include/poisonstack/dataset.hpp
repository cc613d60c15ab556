#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "poisonstack/matrix.hpp"

namespace poisonstack {

using Label = std::uint32_t;

// Where a dataset came from. Values are the on-disk provenance tag byte.
enum class DatasetRole : std::uint8_t {
  Base = 0,
  C1 = 1,  // clean training split
  C2 = 2,  // feature-poisoned training split
  C3 = 3,  // label-poisoned training split
  V = 4,   // validation holdout
  Synthetic = 5,
};

std::string_view to_string(DatasetRole role);

struct Provenance {
  DatasetRole role = DatasetRole::Base;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

using Features = std::variant<CsrMatrix, DenseMatrix>;

struct Dataset {
  Features features;
  std::vector<Label> labels;
  std::uint32_t n_classes = 0;
  Provenance provenance;

  Index n_rows() const;
  Index n_cols() const;
  bool is_sparse() const { return std::holds_alternative<CsrMatrix>(features); }
  const CsrMatrix& sparse() const;
  const DenseMatrix& dense() const;

  // Throws DimensionError / LabelRangeError when invariants do not hold.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

Dataset select_rows(const Dataset& ds, std::span<const std::size_t> rows);

}  // namespace poisonstack
