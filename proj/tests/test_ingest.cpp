#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/ingest.hpp"
#include "test_support.hpp"

using namespace poisonstack;
using namespace testing_support;

namespace {

const char* kMinimal = R"({"data":[5],"row_index":[0],"column_index":[2],"schema":["abc"],
                           "shape":[1,4],"labels":[3]})";

RawArchive random_archive(std::mt19937_64& gen, Index rows, Index cols, std::size_t count) {
  const auto coo = random_coo(gen, rows, cols, count);
  RawArchive raw;
  raw.n_rows = rows;
  raw.n_cols = cols;
  for (const auto& e : coo.entries) {
    raw.data.push_back(e.value);
    raw.row_index.push_back(e.row);
    raw.column_index.push_back(e.col);
  }
  for (Index c = 0; c < cols; ++c) raw.schema.push_back("g" + std::to_string(c));
  std::uniform_int_distribution<Label> label(0, 4);
  for (Index r = 0; r < rows; ++r) raw.labels.push_back(label(gen));
  return raw;
}

Dataset random_dataset(std::mt19937_64& gen, Index rows, Index cols, bool dense) {
  Dataset ds;
  const auto csr = random_csr(gen, rows, cols, 0.3);
  if (dense) {
    ds.features = to_dense(csr);
  } else {
    ds.features = csr;
  }
  std::uniform_int_distribution<Label> label(0, 4);
  for (Index r = 0; r < rows; ++r) ds.labels.push_back(label(gen));
  ds.n_classes = 5;
  ds.provenance = {DatasetRole::C2, gen()};
  return ds;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST_CASE("minimal archive parses to one triplet and assembles") {
  const auto raw = parse_raw_json(kMinimal);
  CHECK(raw.data == std::vector<double>{5.0});
  CHECK(raw.row_index == std::vector<Index>{0});
  CHECK(raw.column_index == std::vector<Index>{2});
  CHECK(raw.schema == std::vector<std::string>{"abc"});
  CHECK(raw.n_rows == 1);
  CHECK(raw.n_cols == 4);
  CHECK(raw.labels == std::vector<Label>{3});

  const auto ds = assemble_feature_matrix(raw);
  REQUIRE(ds.is_sparse());
  CHECK(ds.n_rows() == 1);
  CHECK(ds.n_cols() == 4);
  CHECK(ds.sparse().nnz() == 1);
  CHECK(ds.sparse().at(0, 2) == 5.0);
  CHECK(ds.labels == std::vector<Label>{3});
  CHECK(ds.n_classes == 5);
  CHECK(ds.provenance.role == DatasetRole::Base);
}

TEST_CASE("archive schema errors") {
  const std::string good = kMinimal;
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"data\":[5]", "\"values\":[5]")), SchemaError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"shape\":[1,4],", "")), SchemaError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"data\":[5]", "\"data\":[5,6]")), LengthError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"labels\":[3]", "\"labels\":[5]")), LabelRangeError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"labels\":[3]", "\"labels\":[-1]")), LabelRangeError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"labels\":[3]", "\"labels\":[3,1]")), LengthError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"column_index\":[2]", "\"column_index\":[4]")),
                  DimensionError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"row_index\":[0]", "\"row_index\":[-2]")),
                  SchemaError);
  CHECK_THROWS_AS(parse_raw_json(replace(good, "\"data\":[5]", "\"data\":[\"5\"]")), SchemaError);
  CHECK_THROWS_AS(parse_raw_json("{\"data\": [1,"), SchemaError);
  CHECK_THROWS_AS(parse_raw_json("[]"), SchemaError);
}

TEST_CASE("duplicate placements are rejected") {
  RawArchive raw = parse_raw_json(kMinimal);
  raw.data.push_back(7.0);
  raw.row_index.push_back(0);
  raw.column_index.push_back(2);
  CHECK_THROWS_AS(assemble_feature_matrix(raw), DuplicateEntry);
}

TEST_CASE("assembly matches direct assignment on random archives") {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<Index> dim(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = dim(gen), cols = dim(gen);
    std::uniform_int_distribution<std::size_t> count(0, rows * cols);
    const auto raw = random_archive(gen, rows, cols, count(gen));
    std::vector<double> oracle(rows * cols, 0.0);
    for (std::size_t i = 0; i < raw.data.size(); ++i)
      oracle[raw.row_index[i] * cols + raw.column_index[i]] = raw.data[i];

    const auto ds = assemble_feature_matrix(raw);
    CHECK(ds.sparse().nnz() == raw.data.size());
    CHECK(dense_of(ds.sparse()) == oracle);
    CHECK(ds.labels == raw.labels);
  }
}

TEST_CASE("json round trip through a file keeps file order") {
  std::mt19937_64 gen(32);
  const auto raw = random_archive(gen, 10, 6, 25);
  std::string text = "{\"data\":[";
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", raw.data[i]);
    text += (i ? "," : "") + std::string(buf);
  }
  auto join = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  text += "],\"row_index\":[" + join(raw.row_index) + "],\"column_index\":[" +
          join(raw.column_index) + "],\"schema\":[";
  for (std::size_t i = 0; i < raw.schema.size(); ++i) text += (i ? ",\"" : "\"") + raw.schema[i] + "\"";
  text += "],\"shape\":[10,6],\"labels\":[" + join(raw.labels) + "]}";

  const auto path = (std::filesystem::temp_directory_path() / "ps_archive_test.json").string();
  write_text_file(path, text);
  const auto back = load_raw_json(path);
  std::filesystem::remove(path);
  CHECK(back.data == raw.data);
  CHECK(back.row_index == raw.row_index);
  CHECK(back.column_index == raw.column_index);
  CHECK(back.schema == raw.schema);
  CHECK(back.labels == raw.labels);
  CHECK_THROWS_AS(load_raw_json(path), IoError);
}

TEST_CASE("full-scale archive header counts are accepted") {
  constexpr Index kRows = 12536;
  constexpr Index kCols = 6317199;
  RawArchive raw;
  raw.n_rows = kRows;
  raw.n_cols = kCols;
  raw.data.assign(kCols, 1.0);
  raw.row_index.resize(kCols);
  raw.column_index.resize(kCols);
  for (Index i = 0; i < kCols; ++i) {
    raw.row_index[i] = i % kRows;
    raw.column_index[i] = i;
  }
  raw.labels.resize(kRows);
  for (Index r = 0; r < kRows; ++r) raw.labels[r] = static_cast<Label>(r % 5);
  CHECK_NOTHROW(validate_archive(raw));
  CHECK(raw.data.size() == 6317199);
  raw.labels.pop_back();
  CHECK_THROWS_AS(validate_archive(raw), LengthError);
}

TEST_CASE("min-max normalisation of stored entries") {
  // Column 0 stores 1 and 3 in every row; column 1 is constant 2.
  CooMatrix coo{2, 3, {{0, 0, 1.0}, {1, 0, 3.0}, {0, 1, 2.0}, {1, 1, 2.0}, {1, 2, 4.0}}};
  Dataset ds{coo_to_csr(coo), {0, 1}, 5, {}};
  const auto spec = fit_normalizer(ds);
  const auto out = apply_normalizer(spec, ds);
  CHECK(out.sparse().at(0, 0) == -1.0);
  CHECK(out.sparse().at(1, 0) == 1.0);
  CHECK(out.sparse().at(0, 1) == 0.0);
  CHECK(out.sparse().at(1, 1) == 0.0);
  // Column 2 has an implicit zero, so its range is [0, 4].
  CHECK(spec.recorded_mins[2] == 0.0);
  CHECK(out.sparse().at(1, 2) == 1.0);
  CHECK(out.sparse().nnz() == ds.sparse().nnz());
  for (std::size_t c = 0; c < 3; ++c) CHECK(spec.recorded_mins[c] <= spec.recorded_maxes[c]);

  Dataset narrow{coo_to_csr(CooMatrix{1, 2, {}}), {0}, 5, {}};
  CHECK_THROWS_AS(apply_normalizer(spec, narrow), DimensionError);
}

TEST_CASE("normalisation matches a per-column affine oracle") {
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ds = random_dataset(gen, 5, 3, trial % 2 == 0);
    const auto spec = fit_normalizer(ds);
    const auto out = apply_normalizer(spec, ds);
    const auto in_dense = ds.is_sparse() ? to_dense(ds.sparse()) : ds.dense();
    const auto out_dense = out.is_sparse() ? to_dense(out.sparse()) : out.dense();
    for (Index c = 0; c < 3; ++c) {
      double lo = in_dense(0, c), hi = in_dense(0, c);
      for (Index r = 0; r < 5; ++r) {
        lo = std::min(lo, in_dense(r, c));
        hi = std::max(hi, in_dense(r, c));
      }
      for (Index r = 0; r < 5; ++r) {
        const double x = in_dense(r, c);
        // Only stored entries are rewritten; unstored zeros stay zero.
        const bool stored = !ds.is_sparse() || ds.sparse().at(r, c) != 0.0;
        double expected = x;
        if (stored) expected = hi > lo ? 2.0 * (x - lo) / (hi - lo) - 1.0 : 0.0;
        CHECK(std::abs(out_dense(r, c) - expected) <= 1e-12);
      }
    }
  }
}

TEST_CASE("refitting on normalised dense data is the identity") {
  std::mt19937_64 gen(34);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ds = random_dataset(gen, 8, 4, true);
    const auto once = apply_normalizer(fit_normalizer(ds), ds);
    const auto twice = apply_normalizer(fit_normalizer(once), once);
    for (std::size_t i = 0; i < once.dense().values().size(); ++i)
      CHECK(std::abs(twice.dense().values()[i] - once.dense().values()[i]) <= 1e-12);
  }
}

TEST_CASE("scale-only normalisation divides by the column deviation") {
  DenseMatrix x(4, 1, std::vector<double>{1, 3, 1, 3});
  Dataset ds{x, {0, 1, 0, 1}, 2, {}};
  const auto spec = fit_normalizer(ds, NormalizationMode::ScaleOnly);
  CHECK(spec.recorded_scales[0] == doctest::Approx(1.0));
  const auto out = apply_normalizer(spec, ds);
  CHECK(out.dense()(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("container round trips are bit exact") {
  std::mt19937_64 gen(35);
  SUBCASE("empty") {
    Dataset ds{CsrMatrix(0, 0, {0}, {}, {}), {}, 0, {}};
    CHECK(decode_container(encode_container(ds)) == ds);
  }
  SUBCASE("identity") {
    Dataset ds{coo_to_csr(CooMatrix{3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}}}),
               {0, 1, 2}, 3, {DatasetRole::V, 9}};
    CHECK(decode_container(encode_container(ds)) == ds);
  }
  SUBCASE("random sparse and dense") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto ds = random_dataset(gen, 50, 20, trial % 2 == 1);
      const auto bytes = encode_container(ds);
      CHECK(encode_container(ds) == bytes);
      const auto back = decode_container(bytes);
      CHECK(back == ds);
      CHECK(encode_container(back) == bytes);
    }
  }
  SUBCASE("files") {
    const auto ds = random_dataset(gen, 50, 20, false);
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = (dir / "ps_container_a.psds").string();
    const auto b = (dir / "ps_container_b.psds").string();
    save_container(ds, a);
    save_container(load_container(a), b);
    CHECK(read_file(a) == read_file(b));
    CHECK(load_container(b) == ds);
    std::filesystem::remove(a);
    std::filesystem::remove(b);
  }
  SUBCASE("optional sections") {
    ContainerContents c{random_dataset(gen, 4, 3, true), std::vector<double>{3.0, 2.0},
                        std::vector<std::uint8_t>{1, 2, 3}};
    const auto back = decode_container_sections(encode_container(c));
    CHECK(back.dataset == c.dataset);
    CHECK(back.singular_values == c.singular_values);
    CHECK(back.metadata == c.metadata);
  }
}

TEST_CASE("container corruption is reported") {
  std::mt19937_64 gen(36);
  const auto ds = random_dataset(gen, 6, 5, false);
  const auto bytes = encode_container(ds);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_container(bad_version), FormatError);
  CHECK_THROWS_AS(decode_container(std::vector<std::uint8_t>{'P', 'S'}), FormatError);

  // Every proper prefix past the magic is a truncation.
  for (std::size_t len = 5; len < bytes.size(); len += 7) {
    auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + len);
    CHECK_THROWS_AS(decode_container(cut), TruncationError);
  }
  auto trailing = bytes;
  trailing.push_back(9);
  CHECK_THROWS_AS(decode_container(trailing), Error);
  CHECK_THROWS_AS(load_container("/nonexistent/dir/file.psds"), IoError);
}
