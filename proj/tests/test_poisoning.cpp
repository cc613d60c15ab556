#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>
#include <set>

#include "poisonstack/errors.hpp"
#include "poisonstack/learners.hpp"
#include "poisonstack/poisoning.hpp"
#include "test_support.hpp"

using namespace poisonstack;
using namespace testing_support;

namespace {

Dataset sparse_dataset(std::mt19937_64& gen, Index rows, Index cols, double density,
                       std::uint32_t classes = 5) {
  Dataset ds;
  ds.features = random_csr(gen, rows, cols, density);
  for (Index r = 0; r < rows; ++r) ds.labels.push_back(static_cast<Label>(r % classes));
  std::shuffle(ds.labels.begin(), ds.labels.end(), gen);
  ds.n_classes = classes;
  return ds;
}

bool is_fill_value(double v) {
  for (int r = 1; r <= 10; ++r)
    if (v == static_cast<double>(r) * 0.1) return true;
  return false;
}

// Independent check of one C2 output against its pre-image: counts every
// position whose stored value changed and validates the change rule.
std::size_t changed_positions(const CsrMatrix& before, const CsrMatrix& after, Index r) {
  std::size_t changed = 0;
  for (Index c = 0; c < before.n_cols(); ++c) {
    const double a = before.at(r, c);
    const double b = after.at(r, c);
    if (a == b) continue;
    ++changed;
    if (a != 0.0) {
      CHECK(b == 1.5 * a);
    } else {
      CHECK(is_fill_value(b));
    }
  }
  return changed;
}

}  // namespace

TEST_CASE("round half up") {
  CHECK(round_half_up(0.2) == 0);
  CHECK(round_half_up(0.5) == 1);
  CHECK(round_half_up(2.5) == 3);
  CHECK(round_half_up(9.99) == 10);
  CHECK(round_half_up(0.25 * 12536) == 3134);
}

TEST_CASE("stratified split of eight balanced rows takes one per class") {
  Dataset ds{to_csr(DenseMatrix(8, 2, 1.0)), {0, 1, 0, 1, 0, 1, 0, 1}, 2, {}};
  const auto split = split_validation(ds, SplitSpec{0.25, 4, true});
  CHECK(split.validation.n_rows() == 2);
  CHECK(split.training.n_rows() == 6);
  auto labels = split.validation.labels;
  std::sort(labels.begin(), labels.end());
  CHECK(labels == std::vector<Label>{0, 1});
  CHECK(split.validation.provenance.role == DatasetRole::V);
  CHECK(split.training.provenance.role == DatasetRole::C1);
}

TEST_CASE("split sizes, partition and stratification") {
  std::mt19937_64 gen(40);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 20 + trial * 7;
    DenseMatrix x(n, 1);
    for (Index r = 0; r < n; ++r) x(r, 0) = static_cast<double>(r);
    Dataset ds{to_csr(x), {}, 5, {}};
    std::uniform_int_distribution<Label> label(0, 4);
    for (Index r = 0; r < n; ++r) ds.labels.push_back(r < 10 ? static_cast<Label>(r % 5) : label(gen));

    const double fraction = 0.1 + 0.05 * (trial % 10);
    const auto split = split_validation(ds, SplitSpec{fraction, static_cast<std::uint64_t>(trial), true});
    CHECK(split.validation.n_rows() == round_half_up(fraction * static_cast<double>(n)));

    // Column 0 holds the original row id (zero for row 0, which is unstored).
    std::vector<Index> ids;
    for (const auto* part : {&split.validation, &split.training}) {
      Index prev = 0;
      for (Index r = 0; r < part->n_rows(); ++r) {
        const auto id = static_cast<Index>(part->sparse().at(r, 0));
        if (r > 0) CHECK(id > prev);
        prev = id;
        ids.push_back(id);
        CHECK(part->labels[r] == ds.labels[id]);
      }
    }
    std::sort(ids.begin(), ids.end());
    for (Index i = 0; i < n; ++i) CHECK(ids[i] == i);

    for (Label c = 0; c < 5; ++c) {
      const auto total = std::count(ds.labels.begin(), ds.labels.end(), c);
      const auto in_v = std::count(split.validation.labels.begin(), split.validation.labels.end(), c);
      CHECK(std::abs(static_cast<double>(in_v) - fraction * static_cast<double>(total)) < 1.0 + 1e-9);
    }
    const auto again = split_validation(ds, SplitSpec{fraction, static_cast<std::uint64_t>(trial), true});
    CHECK(again.validation == split.validation);
    CHECK(again.training == split.training);
  }
}

TEST_CASE("split errors") {
  Dataset ds{to_csr(DenseMatrix(5, 1, 1.0)), {0, 0, 1, 1, 2}, 3, {}};
  CHECK_THROWS_AS(split_validation(ds, SplitSpec{0.25, 1, true}), StratifyError);
  CHECK_NOTHROW(split_validation(ds, SplitSpec{0.25, 1, false}));
  CHECK_THROWS_AS(split_validation(ds, SplitSpec{0.0, 1, false}), ConfigError);
  CHECK_THROWS_AS(split_validation(ds, SplitSpec{1.0, 1, false}), ConfigError);
}

TEST_CASE("C2 on an all-zero row adds exactly two fill values") {
  Dataset ds{CsrMatrix(1, 10, {0, 0}, {}, {}), {0}, 5, {}};
  const auto [c2, report] = perturb_features(ds, 0.2, 3);
  CHECK(c2.sparse().nnz() == 2);
  for (double v : c2.sparse().values()) CHECK(is_fill_value(v));
  CHECK(report.n_targets == 2);
  CHECK(report.n_changed == 2);
}

TEST_CASE("C2 on an all-ones row scales exactly one entry") {
  Dataset ds{to_csr(DenseMatrix(1, 5, 1.0)), {0}, 5, {}};
  const auto [c2, report] = perturb_features(ds, 0.2, 3);
  const auto v = c2.sparse().values();
  CHECK(std::count(v.begin(), v.end(), 1.5) == 1);
  CHECK(std::count(v.begin(), v.end(), 1.0) == 4);
}

TEST_CASE("C2 exactness on random datasets") {
  std::mt19937_64 gen(41);
  std::uniform_int_distribution<Index> dim(5, 60);
  std::set<double> fills;
  for (int trial = 0; trial < 50; ++trial) {
    const Index rows = dim(gen), cols = dim(gen);
    const auto ds = sparse_dataset(gen, rows, cols, 0.3);
    const std::uint64_t seed = gen();
    const auto [c2, report] = perturb_features(ds, 0.2, seed);
    const std::size_t expected = round_half_up(0.2 * static_cast<double>(cols));
    for (Index r = 0; r < rows; ++r)
      CHECK(changed_positions(ds.sparse(), c2.sparse(), r) == expected);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        if (ds.sparse().at(r, c) == 0.0 && c2.sparse().at(r, c) != 0.0) fills.insert(c2.sparse().at(r, c));
    CHECK(c2.labels == ds.labels);
    CHECK(c2.provenance.role == DatasetRole::C2);
    CHECK(report.n_targets == expected * rows);
    CHECK(report.n_changed == expected * rows);
    CHECK(std::abs(report.target_fraction - static_cast<double>(expected) / cols) <= 1e-12);

    const auto [again, report2] = perturb_features(ds, 0.2, seed);
    CHECK(again == c2);
    CHECK(report2.targets_digest == report.targets_digest);
  }
  // Every fill value shows up somewhere across the runs.
  CHECK(fills.size() == 10);
}

TEST_CASE("C2 random 100x50 changes ten entries per row") {
  std::mt19937_64 gen(42);
  const auto ds = sparse_dataset(gen, 100, 50, 0.2);
  const auto [c2, report] = perturb_features(ds, 0.2, 17);
  std::size_t total = 0;
  for (Index r = 0; r < 100; ++r) total += changed_positions(ds.sparse(), c2.sparse(), r);
  CHECK(total == 1000);
}

TEST_CASE("C3 label exactness") {
  std::mt19937_64 gen(43);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<Index> size(1, 300);
    const Index n = size(gen);
    const auto ds = sparse_dataset(gen, n, 6, 0.4);
    const std::uint64_t seed = gen();
    const auto [c3, report] = perturb_labels(ds, 0.2, seed);
    CHECK(c3.features == ds.features);
    CHECK(report.n_targets == round_half_up(0.2 * static_cast<double>(n)));
    std::size_t differing = 0;
    for (Index i = 0; i < n; ++i) differing += c3.labels[i] != ds.labels[i];
    CHECK(differing == report.n_changed);
    CHECK(differing <= report.n_targets);
    for (Label l : c3.labels) CHECK(l < 5);
    CHECK(perturb_labels(ds, 0.2, seed).first == c3);
  }
}

TEST_CASE("C3 touches two of ten labels and none of one") {
  std::mt19937_64 gen(44);
  const auto ten = sparse_dataset(gen, 10, 3, 0.5);
  CHECK(perturb_labels(ten, 0.2, 1).second.n_targets == 2);
  const auto one = sparse_dataset(gen, 1, 3, 0.5);
  const auto [c3, report] = perturb_labels(one, 0.2, 1);
  CHECK(report.n_targets == 0);
  CHECK(c3.labels == one.labels);
  CHECK(c3.features == one.features);
}

TEST_CASE("C3 effective flip fraction is about 0.16") {
  std::mt19937_64 gen(45);
  const auto ds = sparse_dataset(gen, 10000, 2, 0.5);
  const auto [c3, report] = perturb_labels(ds, 0.2, 2024);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) differing += c3.labels[i] != ds.labels[i];
  const double fraction = static_cast<double>(differing) / 10000.0;
  CHECK(std::abs(fraction - 0.16) <= 0.01);
}

TEST_CASE("perturbation rate checks and report json") {
  std::mt19937_64 gen(46);
  const auto ds = sparse_dataset(gen, 10, 5, 0.5);
  CHECK_THROWS_AS(perturb_features(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(perturb_features(ds, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(perturb_labels(ds, -0.1, 1), ConfigError);
  const auto report = perturb_labels(ds, 0.2, 5).second;
  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["scheme"] == "C3");
  CHECK(j["n_targets"] == 2);
  CHECK(j["seed"] == 5);
  CHECK(j["targets_digest"].get<std::string>().size() == 40);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.n_samples = 120;
  spec.n_features = 60;
  spec.seed = 8;
  const auto a = make_synthetic_dataset(spec);
  CHECK(a == make_synthetic_dataset(spec));
  CHECK(a.n_rows() == 120);
  CHECK(a.n_cols() == 60);
  CHECK(a.n_classes == 5);
  for (Label c = 0; c < 5; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 24);

  // Every row carries at least one of its own signal columns.
  for (Index r = 0; r < a.n_rows(); ++r) {
    bool own = false;
    for (Index c : a.sparse().row_cols(r)) own |= c / spec.signal_columns == a.labels[r];
    CHECK(own);
  }

  spec.n_samples = 0;
  const auto empty = make_synthetic_dataset(spec);
  CHECK(empty.n_rows() == 0);
  CHECK(empty.labels.empty());

  spec.signal_columns = 13;
  CHECK_THROWS_AS(make_synthetic_dataset(spec), ConfigError);
  spec.signal_columns = 10;
  spec.n_classes = 1;
  CHECK_THROWS_AS(make_synthetic_dataset(spec), ConfigError);
}

TEST_CASE("fully separable synthetic data is linearly separable") {
  SyntheticSpec spec;
  spec.n_features = 20;
  spec.n_classes = 2;
  spec.signal_columns = 5;
  spec.signal_density = 0.6;
  spec.background_density = 0.02;
  spec.separability = 1.0;
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.n_samples = 40;
    spec.seed = seed;
    const auto train = make_synthetic_dataset(spec);
    spec.n_samples = 200;
    spec.seed = 100 + seed;
    const auto test = make_synthetic_dataset(spec);

    // The block-sum hyperplane w_c = 1 on class c's signal columns separates
    // every draw: other classes' signal columns are never active.
    for (Index r = 0; r < test.n_rows(); ++r) {
      double score[2] = {0.0, 0.0};
      const auto cols = test.sparse().row_cols(r);
      const auto vals = test.sparse().row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        if (cols[k] < 10) score[cols[k] / 5] += vals[k];
      CHECK(score[test.labels[r]] > 0.0);
      CHECK(score[1 - test.labels[r]] == 0.0);
    }

    // A fitted linear model from 40 samples gets (nearly) all of it.
    const auto model = fit(LearnerSpec::defaults(LearnerKind::LogisticRegression),
                           to_dense(train.sparse()), train.labels);
    const double acc = accuracy(predict(model, to_dense(test.sparse())), test.labels);
    CHECK(acc >= 0.98);
    total += acc;
  }
  CHECK(total / 10.0 >= 0.995);
}
