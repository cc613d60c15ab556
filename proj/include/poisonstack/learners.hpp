#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "poisonstack/dataset.hpp"
#include "poisonstack/matrix.hpp"

namespace poisonstack {

class ByteWriter;
class ByteReader;

enum class LearnerKind : std::uint8_t {
  RandomForest = 0,
  Svm = 1,
  GradientBoosting = 2,
  LogisticRegression = 3,
  Mlp = 4,
  Lda = 5,
  Qda = 6,
  GaussianNb = 7,
  Bagging = 8,
  DecisionTree = 9,
};

// Canonical roster order (the order the base grid reports rows in).
inline constexpr std::array<LearnerKind, 10> kAllLearners = {
    LearnerKind::RandomForest, LearnerKind::Svm,     LearnerKind::GradientBoosting,
    LearnerKind::LogisticRegression, LearnerKind::Mlp, LearnerKind::Lda,
    LearnerKind::Qda,          LearnerKind::GaussianNb, LearnerKind::Bagging,
    LearnerKind::DecisionTree};

std::string_view to_string(LearnerKind kind);   // snake_case identifier
std::string_view display_name(LearnerKind kind);  // table label
LearnerKind parse_learner_kind(std::string_view name);  // throws ConfigError

struct TreeParams {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> max_features;  // features tried per split; nullopt = all
};

struct RandomForestParams {
  std::size_t n_trees = 100;
  bool bootstrap = true;
  std::optional<std::size_t> max_features;  // nullopt = floor(sqrt(M))
  TreeParams tree;
};

struct BaggingParams {
  std::size_t n_estimators = 10;
  bool bootstrap = true;
  // Fraction of columns each member sees, drawn without replacement.
  double max_features_fraction = 1.0;
  TreeParams tree;
};

struct GradientBoostingParams {
  std::size_t n_stages = 100;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
};

struct LogisticRegressionParams {
  double l2 = 1.0;
  double tol = 1e-4;
  std::size_t max_iter = 200;
};

struct MlpParams {
  std::size_t hidden_units = 100;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double tol = 1e-4;
  std::size_t n_iter_no_change = 10;
  double l2 = 1e-4;
};

struct SvmParams {
  double l2 = 1.0;
  double tol = 1e-4;
  std::size_t max_iter = 1000;
};

struct LdaParams {
  double ridge = 1e-6;
};

struct QdaParams {
  double ridge = 1e-6;
  // Pool the class covariances (reduces QDA to LDA's decision rule).
  bool shared_covariance = false;
};

struct GaussianNbParams {
  double var_smoothing = 1e-9;
};

using Hyperparameters =
    std::variant<RandomForestParams, SvmParams, GradientBoostingParams, LogisticRegressionParams,
                 MlpParams, LdaParams, QdaParams, GaussianNbParams, BaggingParams, TreeParams>;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::DecisionTree;
  Hyperparameters params = TreeParams{};
  std::uint64_t seed = 0;

  static LearnerSpec defaults(LearnerKind kind, std::uint64_t seed = 0);
  // Throws ConfigError when the parameter block does not match `kind` or a
  // value is out of range.
  void validate() const;
  // One-line "kind seed=... key=value ..." summary for run metadata.
  std::string describe() const;
};

// Hyperparameters as ordered (name, value) text pairs, e.g. ("n_trees", "100").
std::vector<std::pair<std::string, std::string>> hyperparameters(const LearnerSpec& spec);
// Throws ConfigError for an unknown name or unparsable value.
void set_hyperparameter(LearnerSpec& spec, std::string_view name, std::string_view value);

// {"kind": ..., "seed": ..., "params": {name: value, ...}}
std::string spec_to_json(const LearnerSpec& spec);
LearnerSpec spec_from_json(std::string_view text);

// Row-stochastic class-probability matrix; column j belongs to classes()[j].
using ProbaMatrix = DenseMatrix;

namespace detail {
class ModelImpl;
}

class TrainedModel {
 public:
  TrainedModel(LearnerKind kind, std::vector<Label> classes, Index n_features, bool degenerate,
               std::shared_ptr<const detail::ModelImpl> impl);

  LearnerKind kind() const noexcept { return kind_; }
  const std::vector<Label>& classes() const noexcept { return classes_; }
  Index n_features() const noexcept { return n_features_; }
  // Trained on a single class; predicts that class with probability 1.
  bool degenerate() const noexcept { return degenerate_; }
  const detail::ModelImpl& impl() const { return *impl_; }

 private:
  LearnerKind kind_;
  std::vector<Label> classes_;
  Index n_features_;
  bool degenerate_;
  std::shared_ptr<const detail::ModelImpl> impl_;
};

// Deterministic in (spec.seed, x, y). Throws DimensionError, NumericError, ConfigError.
TrainedModel fit(const LearnerSpec& spec, const DenseMatrix& x, std::span<const Label> y);

ProbaMatrix predict_proba(const TrainedModel& model, const DenseMatrix& x);
// argmax of predict_proba, ties to the lowest class id.
std::vector<Label> predict(const TrainedModel& model, const DenseMatrix& x);
std::vector<Label> argmax_labels(const ProbaMatrix& proba, std::span<const Label> classes);

double accuracy(std::span<const Label> predicted, std::span<const Label> truth);

// Model container: "PSMD" u8 version, kind u8, degenerate u8, n_features u64,
// class count u64, classes u32[], then the kind's parameter section.
std::vector<std::uint8_t> encode_model(const TrainedModel& model);
TrainedModel decode_model(std::span<const std::uint8_t> bytes);

// Objectives exposed for gradient checking. Parameter layouts:
//   logistic: W (C×D row-major) then b (C)
//   mlp:      W1 (H×D), b1 (H), W2 (C×H), b2 (C)
namespace objectives {

double logistic_loss(std::span<const double> params, const DenseMatrix& x,
                     std::span<const std::uint32_t> y, std::size_t n_classes, double l2,
                     std::span<double> grad);

double mlp_loss(std::span<const double> params, const DenseMatrix& x,
                std::span<const std::uint32_t> y, std::size_t n_classes, std::size_t hidden,
                double l2, std::span<double> grad);

std::size_t mlp_parameter_count(std::size_t n_features, std::size_t hidden, std::size_t n_classes);

}  // namespace objectives

}  // namespace poisonstack
