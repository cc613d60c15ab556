#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poisonstack/dataset.hpp"

namespace poisonstack {

inline constexpr std::uint32_t kArchiveClasses = 5;

// Parsed form of the JSON training archive with keys
// data / row_index / column_index / schema / shape / labels.
struct RawArchive {
  std::vector<double> data;
  std::vector<Index> row_index;
  std::vector<Index> column_index;
  std::vector<std::string> schema;  // n-gram names
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<Label> labels;
};

// Throws SchemaError (missing or mistyped key), LengthError, LabelRangeError,
// DimensionError (index beyond shape).
RawArchive parse_raw_json(std::string_view json_text);
RawArchive load_raw_json(const std::string& path);

// Archive invariants checked by both parsing and assembly.
void validate_archive(const RawArchive& raw);

// feature_matrix[row_index[i], column_index[i]] = data[i]. Throws DuplicateEntry.
Dataset assemble_feature_matrix(const RawArchive& raw);

enum class NormalizationMode : std::uint8_t {
  MinMaxSymmetric = 0,  // per-feature min-max onto [-1, 1]
  ScaleOnly = 1,        // divide by per-feature standard deviation
};

// Column statistics fitted on a training split. Unstored entries count as
// zeros when the statistics are computed; only stored entries are rewritten
// so sparsity is preserved.
struct NormalizationSpec {
  NormalizationMode mode = NormalizationMode::MinMaxSymmetric;
  std::vector<double> recorded_mins;
  std::vector<double> recorded_maxes;
  std::vector<double> recorded_scales;  // ScaleOnly: per-column std deviation
};

NormalizationSpec fit_normalizer(const Dataset& ds,
                                 NormalizationMode mode = NormalizationMode::MinMaxSymmetric);
Dataset apply_normalizer(const NormalizationSpec& spec, const Dataset& ds);

// Binary dataset container ("PSDS", version 1).
std::vector<std::uint8_t> encode_container(const Dataset& ds);
Dataset decode_container(std::span<const std::uint8_t> bytes);
void save_container(const Dataset& ds, const std::string& path);
Dataset load_container(const std::string& path);

// Optional trailing section carrying the singular values of an SVD model.
inline constexpr std::uint8_t kSingularValuesSection = 2;
// Opaque length-prefixed blob (u64 length, bytes) for model metadata.
inline constexpr std::uint8_t kMetadataSection = 3;

struct ContainerContents {
  Dataset dataset;
  std::optional<std::vector<double>> singular_values;
  std::optional<std::vector<std::uint8_t>> metadata;
};

std::vector<std::uint8_t> encode_container(const ContainerContents& contents);
ContainerContents decode_container_sections(std::span<const std::uint8_t> bytes);

}  // namespace poisonstack
