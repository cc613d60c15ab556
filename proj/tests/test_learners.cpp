#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/learners.hpp"
#include "test_support.hpp"

using namespace poisonstack;
using namespace testing_support;

namespace {

// Small, fast settings for the iterative learners; the defaults are exercised
// by the acceptance run.
LearnerSpec quick(LearnerKind kind, std::uint64_t seed = 7) {
  auto s = LearnerSpec::defaults(kind, seed);
  if (kind == LearnerKind::RandomForest) std::get<RandomForestParams>(s.params).n_trees = 15;
  if (kind == LearnerKind::GradientBoosting) std::get<GradientBoostingParams>(s.params).n_stages = 20;
  return s;
}

DenseMatrix random_dense(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  DenseMatrix x(rows, cols);
  for (double& v : x.values()) v = dist(gen);
  return x;
}

std::vector<Label> random_labels(std::mt19937_64& gen, std::size_t n, std::uint32_t classes) {
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % classes);
  std::shuffle(y.begin(), y.end(), gen);
  return y;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("every learner separates two distant blobs perfectly") {
  const auto ds = gaussian_blobs(3, 10, 2, 5.0, 0.1);
  for (auto kind : kAllLearners) {
    CAPTURE(to_string(kind));
    const auto model = fit(LearnerSpec::defaults(kind, 11), ds.dense(), ds.labels);
    CHECK_FALSE(model.degenerate());
    CHECK(model.classes() == std::vector<Label>{0, 1});
    CHECK(accuracy(predict(model, ds.dense()), ds.labels) == 1.0);

    DenseMatrix probe(2, 2);
    probe(0, 0) = probe(0, 1) = -5.0;
    probe(1, 0) = probe(1, 1) = 5.0;
    CHECK(predict(model, probe) == std::vector<Label>{0, 1});
  }
}

TEST_CASE("single-class training data yields a flagged constant predictor") {
  DenseMatrix x(4, 2, 1.0);
  const std::vector<Label> y(4, 3);
  for (auto kind : kAllLearners) {
    const auto model = fit(LearnerSpec::defaults(kind), x, y);
    CHECK(model.degenerate());
    DenseMatrix probe(3, 2, -40.0);
    const auto p = predict_proba(model, probe);
    CHECK(p.n_cols() == 1);
    for (double v : p.values()) CHECK(v == 1.0);
    CHECK(predict(model, probe) == std::vector<Label>{3, 3, 3});
  }
}

TEST_CASE("gaussian naive bayes on the four-point fixture") {
  DenseMatrix x(4, 2, std::vector<double>{0, 0, 0, 1, 4, 4, 4, 5});
  const std::vector<Label> y{0, 0, 1, 1};
  const auto model = fit(LearnerSpec::defaults(LearnerKind::GaussianNb), x, y);

  // Means (0, 0.5) and (4, 4.5) are read back from the serialized parameters.
  const auto bytes = encode_model(model);
  ByteReader r(bytes);
  r.bytes(4);
  r.u8(), r.u8(), r.u8();
  r.u64();
  r.array<Label>(r.u64());
  CHECK(r.u64() == 2);
  CHECK(r.u64() == 2);
  const auto means = r.array<double>(r.u64());
  CHECK(means == std::vector<double>{0.0, 0.5, 4.0, 4.5});

  // Hand Bayes: per-class variances (0, 0.25) plus floor 1e-9 * 4.25, where
  // 4.25 is the larger of the two column variances (4 and 4.25).
  const double floor = 1e-9 * 4.25;
  auto log_density = [&](double v, double mean, double var) {
    return -0.5 * std::log(2 * std::numbers::pi * var) - (v - mean) * (v - mean) / (2 * var);
  };
  const double q0 = 0.0, q1 = 0.5;
  const double l0 = std::log(0.5) + log_density(q0, 0.0, floor) + log_density(q1, 0.5, 0.25 + floor);
  const double l1 = std::log(0.5) + log_density(q0, 4.0, floor) + log_density(q1, 4.5, 0.25 + floor);
  const double m = std::max(l0, l1);
  const double p0 = std::exp(l0 - m) / (std::exp(l0 - m) + std::exp(l1 - m));
  const double p1 = std::exp(l1 - m) / (std::exp(l0 - m) + std::exp(l1 - m));

  DenseMatrix probe(1, 2, std::vector<double>{q0, q1});
  const auto p = predict_proba(model, probe);
  CHECK(std::abs(p(0, 0) - p0) <= 1e-9);
  CHECK(std::abs(p(0, 1) - p1) <= 1e-9);

  // A query between the classes, where both posteriors are far from 0 and 1.
  DenseMatrix mid(1, 2, std::vector<double>{1e-4, 2.5});
  const double a0 = std::log(0.5) + log_density(1e-4, 0.0, floor) + log_density(2.5, 0.5, 0.25 + floor);
  const double a1 = std::log(0.5) + log_density(1e-4, 4.0, floor) + log_density(2.5, 4.5, 0.25 + floor);
  const double expected = 1.0 / (1.0 + std::exp(a1 - a0));
  CHECK(std::abs(predict_proba(model, mid)(0, 0) - expected) <= 1e-9);
}

TEST_CASE("logistic regression with zero weights predicts the uniform distribution") {
  ByteWriter w;
  w.bytes("PSMD");
  w.u8(1);
  w.u8(static_cast<std::uint8_t>(LearnerKind::LogisticRegression));
  w.u8(0);
  w.u64(3);
  w.u64(4);
  const std::vector<Label> classes{0, 1, 2, 4};
  w.array(std::span<const Label>(classes));
  w.u64(4);
  w.u64(3);
  w.u64(16);
  w.array(std::span<const double>(std::vector<double>(16, 0.0)));
  const auto model = decode_model(w.buffer());
  std::mt19937_64 gen(1);
  const auto p = predict_proba(model, random_dense(gen, 5, 3, 10.0));
  for (double v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  // Ties go to the lowest class id.
  CHECK(predict(model, random_dense(gen, 2, 3, 1.0)) == std::vector<Label>{0, 0});
}

TEST_CASE("probability rows are stochastic and predict is their argmax") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_dense(gen, 60, 4, 1.0);
    const auto y = random_labels(gen, 60, 3 + trial % 2);
    const auto probe = random_dense(gen, 40, 4, 2.0);
    for (auto kind : kAllLearners) {
      CAPTURE(to_string(kind));
      const auto model = fit(quick(kind, trial), x, y);
      const auto p = predict_proba(model, probe);
      REQUIRE(p.n_cols() == model.classes().size());
      const auto labels = predict(model, probe);
      for (std::size_t i = 0; i < p.n_rows(); ++i) {
        double sum = 0.0;
        std::size_t best = 0;
        for (std::size_t c = 0; c < p.n_cols(); ++c) {
          CHECK(p(i, c) >= 0.0);
          CHECK(p(i, c) <= 1.0);
          sum += p(i, c);
          if (p(i, c) > p(i, best)) best = c;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK(labels[i] == model.classes()[best]);
      }
    }
  }
}

TEST_CASE("logistic gradient matches central differences") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 3 + trial, c = 2 + trial % 3;
    const auto x = random_dense(gen, 12, d, 1.0);
    const auto y = random_labels(gen, 12, static_cast<std::uint32_t>(c));
    auto w = random_vector(gen, c * d + c);
    std::vector<double> grad(w.size()), scratch;
    objectives::logistic_loss(w, x, y, c, 0.7, grad);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double h = 1e-5;
      auto wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double numeric = (objectives::logistic_loss(wp, x, y, c, 0.7, scratch) -
                              objectives::logistic_loss(wm, x, y, c, 0.7, scratch)) /
                             (2 * h);
      CHECK(relative_error(grad[i], numeric) <= 1e-4);
    }
  }
}

TEST_CASE("mlp gradient matches central differences") {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t d = 3, h = 4 + trial, c = 3;
    const auto x = random_dense(gen, 10, d, 1.0);
    const auto y = random_labels(gen, 10, static_cast<std::uint32_t>(c));
    auto w = random_vector(gen, objectives::mlp_parameter_count(d, h, c));
    std::vector<double> grad(w.size()), scratch;
    objectives::mlp_loss(w, x, y, c, h, 0.3, grad);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double step = 1e-5;
      auto wp = w, wm = w;
      wp[i] += step;
      wm[i] -= step;
      const double numeric = (objectives::mlp_loss(wp, x, y, c, h, 0.3, scratch) -
                              objectives::mlp_loss(wm, x, y, c, h, 0.3, scratch)) /
                             (2 * step);
      CHECK(relative_error(grad[i], numeric) <= 1e-4);
    }
  }
}

TEST_CASE("qda with a shared covariance reproduces lda") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ds = gaussian_blobs(100 + trial, 40, 4, 1.5, 1.0, 3);
    auto qda = LearnerSpec::defaults(LearnerKind::Qda);
    std::get<QdaParams>(qda.params).shared_covariance = true;
    const auto lda_model = fit(LearnerSpec::defaults(LearnerKind::Lda), ds.dense(), ds.labels);
    const auto qda_model = fit(qda, ds.dense(), ds.labels);
    const auto probe = random_dense(gen, 300, 4, 2.0);
    const auto a = predict(lda_model, probe);
    const auto b = predict(qda_model, probe);
    CHECK(accuracy(a, b) >= 0.99);
  }
}

TEST_CASE("a single unbootstrapped full-feature forest tree equals the decision tree") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_dense(gen, 80, 5, 1.0);
    const auto y = random_labels(gen, 80, 3);
    RandomForestParams rf;
    rf.n_trees = 1;
    rf.bootstrap = false;
    rf.max_features = 5;
    const auto forest = fit(LearnerSpec{LearnerKind::RandomForest, rf, 42}, x, y);
    const auto tree = fit(LearnerSpec::defaults(LearnerKind::DecisionTree, 42), x, y);
    const auto probe = random_dense(gen, 200, 5, 1.5);
    CHECK(predict(forest, probe) == predict(tree, probe));
    CHECK(predict_proba(forest, probe) == predict_proba(tree, probe));
  }
}

TEST_CASE("decision tree memorises any dataset with unique rows") {
  std::mt19937_64 gen(10);
  std::uniform_int_distribution<int> size(1, 32), small(0, 3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = static_cast<std::size_t>(size(gen));
    // Coarse integer grid so ties between feature values are common.
    DenseMatrix x(n, 3);
    std::vector<std::vector<double>> seen;
    for (std::size_t i = 0; i < n;) {
      std::vector<double> row{double(small(gen)), double(small(gen)), double(small(gen))};
      if (std::find(seen.begin(), seen.end(), row) != seen.end()) continue;
      seen.push_back(row);
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = row[j];
      ++i;
    }
    std::vector<Label> y(n);
    for (auto& v : y) v = static_cast<Label>(small(gen));
    const auto model = fit(LearnerSpec::defaults(LearnerKind::DecisionTree), x, y);
    CHECK(accuracy(predict(model, x), y) == 1.0);
  }
}

TEST_CASE("a forest whose trees all agree gives a one-hot row") {
  const auto ds = gaussian_blobs(4, 30, 3, 6.0, 0.2, 3);
  const auto model = fit(quick(LearnerKind::RandomForest), ds.dense(), ds.labels);
  DenseMatrix probe(1, 3, std::vector<double>{0.0, 0.0, 6.0});
  const auto p = predict_proba(model, probe);
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(0, 2) == 1.0);
}

TEST_CASE("fits are deterministic and survive serialization") {
  std::mt19937_64 gen(12);
  const auto x = random_dense(gen, 50, 4, 1.0);
  const auto y = random_labels(gen, 50, 3);
  const auto probe = random_dense(gen, 30, 4, 1.0);
  for (auto kind : kAllLearners) {
    CAPTURE(to_string(kind));
    const auto a = fit(quick(kind, 99), x, y);
    const auto b = fit(quick(kind, 99), x, y);
    const auto bytes = encode_model(a);
    CHECK(bytes == encode_model(b));
    const auto back = decode_model(bytes);
    CHECK(back.kind() == kind);
    CHECK(back.classes() == a.classes());
    CHECK(predict_proba(back, probe) == predict_proba(a, probe));
    CHECK(encode_model(back) == bytes);

    auto cut = bytes;
    cut.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_model(cut), TruncationError);
  }
}

TEST_CASE("labels need not be contiguous") {
  const auto ds = gaussian_blobs(5, 10, 2, 5.0, 0.1);
  std::vector<Label> y = ds.labels;
  for (auto& v : y) v = v == 0 ? 1 : 4;
  const auto model = fit(quick(LearnerKind::Lda), ds.dense(), y);
  CHECK(model.classes() == std::vector<Label>{1, 4});
  CHECK(predict(model, ds.dense()) == y);
}

TEST_CASE("learner error handling") {
  DenseMatrix x(4, 2, 1.0);
  std::vector<Label> y{0, 1, 0, 1};
  CHECK_THROWS_AS(fit(LearnerSpec::defaults(LearnerKind::Lda), x, std::vector<Label>{0, 1}),
                  DimensionError);
  x(2, 1) = std::nan("");
  CHECK_THROWS_AS(fit(LearnerSpec::defaults(LearnerKind::Lda), x, y), NumericError);
  x(2, 1) = 0.0;
  const auto model = fit(LearnerSpec::defaults(LearnerKind::DecisionTree), x, y);
  CHECK_THROWS_AS(predict(model, DenseMatrix(2, 3)), DimensionError);
  CHECK(predict(model, DenseMatrix(0, 2)).empty());

  LearnerSpec bad{LearnerKind::Svm, TreeParams{}, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto gb = LearnerSpec::defaults(LearnerKind::GradientBoosting);
  std::get<GradientBoostingParams>(gb.params).learning_rate = 0.0;
  CHECK_THROWS_AS(gb.validate(), ConfigError);
  auto rf = LearnerSpec::defaults(LearnerKind::RandomForest);
  std::get<RandomForestParams>(rf.params).n_trees = 0;
  CHECK_THROWS_AS(fit(rf, x, y), ConfigError);
  CHECK_THROWS_AS(parse_learner_kind("kernel_svm"), ConfigError);
  for (auto kind : kAllLearners) CHECK(parse_learner_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(decode_model(std::vector<std::uint8_t>{'P', 'S', 'M', 'X', 1}), FormatError);
}

TEST_CASE("accuracy arithmetic") {
  const std::vector<Label> a{0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1};
  CHECK(accuracy(a, a) == 1.0);
  std::vector<Label> b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) b[i] = (a[i] + 1) % 5;
  CHECK(accuracy(a, b) == 0.0);
  auto c = a;
  c[0] = 4, c[5] = 3, c[10] = 2;
  CHECK(accuracy(c, a) == 0.75);
  CHECK_THROWS_AS(accuracy(a, std::vector<Label>{0}), DimensionError);
}

TEST_CASE("describe names every default hyperparameter block") {
  for (auto kind : kAllLearners) {
    const auto s = LearnerSpec::defaults(kind, 3);
    s.validate();
    const auto text = s.describe();
    CHECK(text.rfind(std::string(to_string(kind)), 0) == 0);
    CHECK(text.find("seed=3") != std::string::npos);
  }
  CHECK(LearnerSpec::defaults(LearnerKind::RandomForest).describe().find("n_trees=100") !=
        std::string::npos);
}

TEST_CASE("hyperparameters round trip through text and json") {
  for (auto kind : kAllLearners) {
    auto spec = LearnerSpec::defaults(kind, 77);
    const auto back = spec_from_json(spec_to_json(spec));
    CHECK(back.kind == kind);
    CHECK(back.seed == 77);
    CHECK(back.describe() == spec.describe());
  }
  auto rf = LearnerSpec::defaults(LearnerKind::RandomForest);
  set_hyperparameter(rf, "n_trees", "7");
  set_hyperparameter(rf, "max_features", "3");
  set_hyperparameter(rf, "bootstrap", "false");
  const auto& p = std::get<RandomForestParams>(rf.params);
  CHECK(p.n_trees == 7);
  CHECK(p.max_features == std::optional<std::size_t>(3));
  CHECK_FALSE(p.bootstrap);
  set_hyperparameter(rf, "max_features", "sqrt");
  CHECK_FALSE(std::get<RandomForestParams>(rf.params).max_features.has_value());
  CHECK(spec_from_json(spec_to_json(rf)).describe() == rf.describe());
  CHECK_THROWS_AS(set_hyperparameter(rf, "learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(set_hyperparameter(rf, "n_trees", "ten"), ConfigError);
  CHECK_THROWS_AS(set_hyperparameter(rf, "n_trees", "-1"), ConfigError);
  auto gb = LearnerSpec::defaults(LearnerKind::GradientBoosting);
  set_hyperparameter(gb, "learning_rate", "0.05");
  CHECK(std::get<GradientBoostingParams>(gb.params).learning_rate == 0.05);
  CHECK_THROWS_AS(spec_from_json("{\"kind\":\"svm\"}"), ConfigError);
}
