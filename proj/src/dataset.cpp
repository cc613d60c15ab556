#include "poisonstack/dataset.hpp"

#include <string>

#include "poisonstack/errors.hpp"

namespace poisonstack {

std::string_view to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::Base: return "base";
    case DatasetRole::C1: return "C1";
    case DatasetRole::C2: return "C2";
    case DatasetRole::C3: return "C3";
    case DatasetRole::V: return "V";
    case DatasetRole::Synthetic: return "synthetic";
  }
  return "unknown";
}

Index Dataset::n_rows() const {
  return std::visit([](const auto& m) { return m.n_rows(); }, features);
}

Index Dataset::n_cols() const {
  return std::visit([](const auto& m) { return m.n_cols(); }, features);
}

const CsrMatrix& Dataset::sparse() const {
  if (!is_sparse()) throw DimensionError("dataset holds dense features, sparse expected");
  return std::get<CsrMatrix>(features);
}

const DenseMatrix& Dataset::dense() const {
  if (is_sparse()) throw DimensionError("dataset holds sparse features, dense expected");
  return std::get<DenseMatrix>(features);
}

void Dataset::validate() const {
  if (n_rows() != labels.size())
    throw DimensionError("feature rows " + std::to_string(n_rows()) + " != labels " +
                         std::to_string(labels.size()));
  for (Label l : labels)
    if (l >= n_classes)
      throw LabelRangeError("label " + std::to_string(l) + " >= n_classes " +
                            std::to_string(n_classes));
}

Dataset select_rows(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.features = std::visit([&](const auto& m) -> Features { return select_rows(m, rows); },
                            ds.features);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(ds.labels.at(r));
  out.n_classes = ds.n_classes;
  out.provenance = ds.provenance;
  return out;
}

}  // namespace poisonstack
