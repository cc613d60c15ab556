#include "poisonstack/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"

namespace poisonstack {

namespace {

using nlohmann::json;

const json& require_key(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw SchemaError(std::string("missing key \"") + key + "\"");
  if (!it->is_array()) throw SchemaError(std::string("key \"") + key + "\" is not an array");
  return *it;
}

std::vector<Index> index_array(const json& arr, const char* key) {
  std::vector<Index> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (v.is_number_unsigned()) {
      out.push_back(v.get<Index>());
    } else if (v.is_number_integer()) {
      throw SchemaError(std::string("negative index in \"") + key + "\"");
    } else {
      throw SchemaError(std::string("non-integer entry in \"") + key + "\"");
    }
  }
  return out;
}

}  // namespace

void validate_archive(const RawArchive& raw) {
  if (raw.data.size() != raw.row_index.size() || raw.data.size() != raw.column_index.size())
    throw LengthError("data/row_index/column_index lengths " + std::to_string(raw.data.size()) +
                      "/" + std::to_string(raw.row_index.size()) + "/" +
                      std::to_string(raw.column_index.size()));
  if (raw.labels.size() != raw.n_rows)
    throw LengthError("labels length " + std::to_string(raw.labels.size()) + " != shape N " +
                      std::to_string(raw.n_rows));
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    if (raw.row_index[i] >= raw.n_rows || raw.column_index[i] >= raw.n_cols)
      throw DimensionError("triplet " + std::to_string(i) + " outside shape");
    if (!std::isfinite(raw.data[i])) throw NumericError("non-finite data entry");
  }
}

RawArchive parse_raw_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("archive root is not an object");

  RawArchive raw;
  const auto& data = require_key(doc, "data");
  const auto& rows = require_key(doc, "row_index");
  const auto& cols = require_key(doc, "column_index");
  const auto& schema = require_key(doc, "schema");
  const auto& shape = require_key(doc, "shape");
  const auto& labels = require_key(doc, "labels");

  raw.data.reserve(data.size());
  for (const auto& v : data) {
    if (!v.is_number()) throw SchemaError("non-numeric entry in \"data\"");
    raw.data.push_back(v.get<double>());
  }
  raw.row_index = index_array(rows, "row_index");
  raw.column_index = index_array(cols, "column_index");
  for (const auto& s : schema) {
    if (!s.is_string()) throw SchemaError("non-string entry in \"schema\"");
    raw.schema.push_back(s.get<std::string>());
  }
  const auto dims = index_array(shape, "shape");
  if (dims.size() != 2) throw SchemaError("\"shape\" must hold exactly [N, M]");
  raw.n_rows = dims[0];
  raw.n_cols = dims[1];
  raw.labels.reserve(labels.size());
  for (const auto& v : labels) {
    if (!v.is_number_integer()) throw SchemaError("non-integer entry in \"labels\"");
    const auto l = v.get<std::int64_t>();
    if (l < 0 || l >= static_cast<std::int64_t>(kArchiveClasses))
      throw LabelRangeError("label " + std::to_string(l) + " outside 0-4");
    raw.labels.push_back(static_cast<Label>(l));
  }
  validate_archive(raw);
  return raw;
}

RawArchive load_raw_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_raw_json(ss.str());
}

Dataset assemble_feature_matrix(const RawArchive& raw) {
  validate_archive(raw);
  CooMatrix coo{raw.n_rows, raw.n_cols, {}};
  coo.entries.reserve(raw.data.size());
  for (std::size_t i = 0; i < raw.data.size(); ++i)
    coo.entries.push_back({raw.row_index[i], raw.column_index[i], raw.data[i]});
  Dataset ds;
  ds.features = coo_to_csr(coo);
  ds.labels = raw.labels;
  ds.n_classes = kArchiveClasses;
  ds.provenance = {DatasetRole::Base, 0};
  ds.validate();
  return ds;
}

NormalizationSpec fit_normalizer(const Dataset& ds, NormalizationMode mode) {
  const Index n = ds.n_rows();
  const Index m = ds.n_cols();
  NormalizationSpec spec;
  spec.mode = mode;
  spec.recorded_mins.assign(m, 0.0);
  spec.recorded_maxes.assign(m, 0.0);
  std::vector<double> sum(m, 0.0), sum_sq(m, 0.0);
  std::vector<Index> stored(m, 0);
  std::vector<bool> seen(m, false);

  auto visit = [&](Index c, double x) {
    if (!seen[c]) {
      spec.recorded_mins[c] = spec.recorded_maxes[c] = x;
      seen[c] = true;
    } else {
      spec.recorded_mins[c] = std::min(spec.recorded_mins[c], x);
      spec.recorded_maxes[c] = std::max(spec.recorded_maxes[c], x);
    }
    sum[c] += x;
    sum_sq[c] += x * x;
    ++stored[c];
  };

  if (ds.is_sparse()) {
    const auto& x = ds.sparse();
    for (Index r = 0; r < n; ++r) {
      const auto cols = x.row_cols(r);
      const auto vals = x.row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) visit(cols[k], vals[k]);
    }
  } else {
    const auto& x = ds.dense();
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < m; ++c) visit(c, x(r, c));
  }
  for (Index c = 0; c < m; ++c) {
    if (stored[c] < n) {  // implicit zeros participate
      spec.recorded_mins[c] = std::min(spec.recorded_mins[c], 0.0);
      spec.recorded_maxes[c] = std::max(spec.recorded_maxes[c], 0.0);
    }
  }
  if (mode == NormalizationMode::ScaleOnly) {
    spec.recorded_scales.assign(m, 1.0);
    for (Index c = 0; c < m; ++c) {
      if (n == 0) continue;
      const double mean = sum[c] / static_cast<double>(n);
      const double var = std::max(0.0, sum_sq[c] / static_cast<double>(n) - mean * mean);
      if (var > 0.0) spec.recorded_scales[c] = std::sqrt(var);
    }
  }
  return spec;
}

Dataset apply_normalizer(const NormalizationSpec& spec, const Dataset& ds) {
  const Index m = ds.n_cols();
  if (spec.recorded_mins.size() != m || spec.recorded_maxes.size() != m)
    throw DimensionError("normalizer fitted on " + std::to_string(spec.recorded_mins.size()) +
                         " columns applied to " + std::to_string(m));
  if (spec.mode == NormalizationMode::ScaleOnly && spec.recorded_scales.size() != m)
    throw DimensionError("normalizer scale vector length mismatch");

  auto map = [&](Index c, double x) {
    if (spec.mode == NormalizationMode::ScaleOnly) return x / spec.recorded_scales[c];
    const double lo = spec.recorded_mins[c];
    const double hi = spec.recorded_maxes[c];
    if (!(hi > lo)) return 0.0;
    return 2.0 * (x - lo) / (hi - lo) - 1.0;
  };

  Dataset out = ds;
  if (ds.is_sparse()) {
    const auto& x = ds.sparse();
    std::vector<double> values(x.values().begin(), x.values().end());
    const auto col_idx = x.col_idx();
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = map(col_idx[k], values[k]);
    out.features = CsrMatrix(x.n_rows(), x.n_cols(),
                             std::vector<Index>(x.row_ptr().begin(), x.row_ptr().end()),
                             std::vector<Index>(col_idx.begin(), col_idx.end()),
                             std::move(values));
  } else {
    DenseMatrix x = ds.dense();
    for (Index r = 0; r < x.n_rows(); ++r)
      for (Index c = 0; c < m; ++c) x(r, c) = map(c, x(r, c));
    out.features = std::move(x);
  }
  return out;
}

// Container layout (little-endian):
//   "PSDS" u8 version=1
//   n_rows u64, n_cols u64, nnz u64, n_classes u32, provenance u8, seed u64, dense u8
//   sparse: row_ptr u64[n_rows+1], col_idx u64[nnz], values f64[nnz]
//   dense:  values f64[n_rows*n_cols]      (nnz field = n_rows*n_cols)
//   labels u32[n_rows]
//   optional sections: tag u8, count u64, body
//     tag 2: f64[count] singular values; tag 3: u8[count] metadata blob
namespace {
constexpr std::string_view kMagic = "PSDS";
constexpr std::uint8_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_container(const ContainerContents& contents) {
  const Dataset& ds = contents.dataset;
  ds.validate();
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(kVersion);
  w.u64(ds.n_rows());
  w.u64(ds.n_cols());
  if (ds.is_sparse()) {
    const auto& x = ds.sparse();
    w.u64(x.nnz());
  } else {
    w.u64(ds.n_rows() * ds.n_cols());
  }
  w.u32(ds.n_classes);
  w.u8(static_cast<std::uint8_t>(ds.provenance.role));
  w.u64(ds.provenance.seed);
  w.u8(ds.is_sparse() ? 0 : 1);
  if (ds.is_sparse()) {
    const auto& x = ds.sparse();
    w.array(x.row_ptr());
    w.array(x.col_idx());
    w.array(x.values());
  } else {
    w.array(ds.dense().values());
  }
  w.array(std::span<const Label>(ds.labels));
  if (contents.singular_values) {
    w.u8(kSingularValuesSection);
    w.u64(contents.singular_values->size());
    w.array(std::span<const double>(*contents.singular_values));
  }
  if (contents.metadata) {
    w.u8(kMetadataSection);
    w.u64(contents.metadata->size());
    w.array(std::span<const std::uint8_t>(*contents.metadata));
  }
  return w.take();
}

std::vector<std::uint8_t> encode_container(const Dataset& ds) {
  return encode_container(ContainerContents{ds, std::nullopt, std::nullopt});
}

ContainerContents decode_container_sections(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic)
    throw FormatError("bad magic, not a PSDS container");
  const auto version = r.u8();
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));

  const Index n_rows = r.u64();
  const Index n_cols = r.u64();
  const Index nnz = r.u64();
  const std::uint32_t n_classes = r.u32();
  const std::uint8_t role = r.u8();
  const std::uint64_t seed = r.u64();
  const std::uint8_t dense = r.u8();
  if (role > static_cast<std::uint8_t>(DatasetRole::Synthetic))
    throw FormatError("unknown provenance tag " + std::to_string(role));
  if (dense > 1) throw FormatError("bad dense flag");

  ContainerContents out;
  Dataset& ds = out.dataset;
  if (dense == 0) {
    if (n_rows == ~Index{0}) throw FormatError("row count overflow");
    auto row_ptr = r.array<Index>(n_rows + 1);
    auto col_idx = r.array<Index>(nnz);
    auto values = r.array<double>(nnz);
    try {
      ds.features = CsrMatrix(n_rows, n_cols, std::move(row_ptr), std::move(col_idx),
                              std::move(values));
    } catch (const Error& e) {
      throw FormatError(std::string("corrupt sparse section: ") + e.what());
    }
  } else {
    if (n_cols != 0 && n_rows > ~Index{0} / n_cols) throw FormatError("dense size overflow");
    if (nnz != n_rows * n_cols) throw FormatError("dense value count mismatch");
    ds.features = DenseMatrix(n_rows, n_cols, r.array<double>(nnz));
  }
  ds.labels = r.array<Label>(n_rows);
  ds.n_classes = n_classes;
  ds.provenance = {static_cast<DatasetRole>(role), seed};

  while (!r.at_end()) {
    const auto tag = r.u8();
    const auto count = r.u64();
    if (tag == kSingularValuesSection) {
      out.singular_values = r.array<double>(count);
    } else if (tag == kMetadataSection) {
      out.metadata = r.array<std::uint8_t>(count);
    } else {
      throw FormatError("unknown section tag " + std::to_string(tag));
    }
  }
  try {
    ds.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent container: ") + e.what());
  }
  return out;
}

Dataset decode_container(std::span<const std::uint8_t> bytes) {
  return decode_container_sections(bytes).dataset;
}

void save_container(const Dataset& ds, const std::string& path) {
  write_file(path, encode_container(ds));
}

Dataset load_container(const std::string& path) { return decode_container(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

void write_text_file(const std::string& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

}  // namespace poisonstack
