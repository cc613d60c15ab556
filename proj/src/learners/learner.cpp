#include <algorithm>
#include <cmath>

#include "model_impl.hpp"
#include "poisonstack/errors.hpp"

namespace poisonstack {

namespace {

struct KindInfo {
  LearnerKind kind;
  std::string_view id;
  std::string_view display;
};

constexpr KindInfo kKinds[] = {
    {LearnerKind::RandomForest, "random_forest", "Random Forest"},
    {LearnerKind::Svm, "svm", "Support Vector Machine"},
    {LearnerKind::GradientBoosting, "gradient_boosting", "Gradient Boosting"},
    {LearnerKind::LogisticRegression, "logistic_regression", "Logistic Regression"},
    {LearnerKind::Mlp, "mlp", "Neural Network (MLP)"},
    {LearnerKind::Lda, "lda", "LDA"},
    {LearnerKind::Qda, "qda", "QDA"},
    {LearnerKind::GaussianNb, "gaussian_nb", "Naive Bayes"},
    {LearnerKind::Bagging, "bagging", "Bagging"},
    {LearnerKind::DecisionTree, "decision_tree", "Decision Tree"},
};

const KindInfo& info(LearnerKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k;
  throw ConfigError("unknown learner kind " + std::to_string(static_cast<int>(kind)));
}

void require(bool ok, std::string_view kind, const std::string& what) {
  if (!ok) throw ConfigError(std::string(kind) + ": " + what);
}

void check_tree(const TreeParams& t, std::string_view kind) {
  require(t.min_samples_split >= 2, kind, "min_samples_split must be >= 2");
  require(t.min_samples_leaf >= 1, kind, "min_samples_leaf must be >= 1");
  require(!t.max_features || *t.max_features >= 1, kind, "max_features must be >= 1");
}

constexpr std::uint8_t kModelVersion = 1;

}  // namespace

std::string_view to_string(LearnerKind kind) { return info(kind).id; }
std::string_view display_name(LearnerKind kind) { return info(kind).display; }

LearnerKind parse_learner_kind(std::string_view name) {
  for (const auto& k : kKinds)
    if (k.id == name) return k.kind;
  throw ConfigError("unknown learner '" + std::string(name) + "'");
}

LearnerSpec LearnerSpec::defaults(LearnerKind kind, std::uint64_t seed) {
  LearnerSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case LearnerKind::RandomForest: s.params = RandomForestParams{}; break;
    case LearnerKind::Svm: s.params = SvmParams{}; break;
    case LearnerKind::GradientBoosting: s.params = GradientBoostingParams{}; break;
    case LearnerKind::LogisticRegression: s.params = LogisticRegressionParams{}; break;
    case LearnerKind::Mlp: s.params = MlpParams{}; break;
    case LearnerKind::Lda: s.params = LdaParams{}; break;
    case LearnerKind::Qda: s.params = QdaParams{}; break;
    case LearnerKind::GaussianNb: s.params = GaussianNbParams{}; break;
    case LearnerKind::Bagging: s.params = BaggingParams{}; break;
    case LearnerKind::DecisionTree: s.params = TreeParams{}; break;
  }
  return s;
}

void LearnerSpec::validate() const {
  const auto name = to_string(kind);
  if (params.index() != static_cast<std::size_t>(kind))
    throw ConfigError(std::string(name) + ": hyperparameter block belongs to another learner");
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, RandomForestParams>) {
          require(p.n_trees >= 1, name, "n_trees must be >= 1");
          require(!p.max_features || *p.max_features >= 1, name, "max_features must be >= 1");
          check_tree(p.tree, name);
        } else if constexpr (std::is_same_v<P, BaggingParams>) {
          require(p.n_estimators >= 1, name, "n_estimators must be >= 1");
          require(p.max_features_fraction > 0.0 && p.max_features_fraction <= 1.0, name,
                  "max_features_fraction must lie in (0, 1]");
          check_tree(p.tree, name);
        } else if constexpr (std::is_same_v<P, TreeParams>) {
          check_tree(p, name);
        } else if constexpr (std::is_same_v<P, GradientBoostingParams>) {
          require(p.n_stages >= 1, name, "n_stages must be >= 1");
          require(p.learning_rate > 0.0, name, "learning_rate must be > 0");
          require(p.max_depth >= 1, name, "max_depth must be >= 1");
        } else if constexpr (std::is_same_v<P, LogisticRegressionParams> ||
                             std::is_same_v<P, SvmParams>) {
          require(p.l2 >= 0.0, name, "l2 must be >= 0");
          require(p.tol > 0.0, name, "tol must be > 0");
          require(p.max_iter >= 1, name, "max_iter must be >= 1");
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          require(p.hidden_units >= 1, name, "hidden_units must be >= 1");
          require(p.learning_rate > 0.0, name, "learning_rate must be > 0");
          require(p.beta1 >= 0.0 && p.beta1 < 1.0 && p.beta2 >= 0.0 && p.beta2 < 1.0, name,
                  "betas must lie in [0, 1)");
          require(p.epsilon > 0.0, name, "epsilon must be > 0");
          require(p.batch_size >= 1 && p.max_epochs >= 1, name, "batch_size and max_epochs must be >= 1");
          require(p.l2 >= 0.0, name, "l2 must be >= 0");
        } else if constexpr (std::is_same_v<P, LdaParams> || std::is_same_v<P, QdaParams>) {
          require(p.ridge >= 0.0, name, "ridge must be >= 0");
        } else if constexpr (std::is_same_v<P, GaussianNbParams>) {
          require(p.var_smoothing >= 0.0, name, "var_smoothing must be >= 0");
        }
      },
      params);
}

TrainedModel::TrainedModel(LearnerKind kind, std::vector<Label> classes, Index n_features,
                           bool degenerate, std::shared_ptr<const detail::ModelImpl> impl)
    : kind_(kind),
      classes_(std::move(classes)),
      n_features_(n_features),
      degenerate_(degenerate),
      impl_(std::move(impl)) {
  if (classes_.empty()) throw DimensionError("trained model needs at least one class");
  for (std::size_t i = 1; i < classes_.size(); ++i)
    if (classes_[i] <= classes_[i - 1]) throw DimensionError("model classes must be increasing");
  if (!impl_) throw DimensionError("trained model without parameters");
}

TrainedModel fit(const LearnerSpec& spec, const DenseMatrix& x, std::span<const Label> y) {
  spec.validate();
  if (y.size() != x.n_rows())
    throw DimensionError("fit: " + std::to_string(x.n_rows()) + " rows but " +
                         std::to_string(y.size()) + " labels");
  if (x.n_rows() == 0) throw DimensionError("fit: empty training set");
  for (double v : x.values())
    if (!std::isfinite(v)) throw NumericError("fit: non-finite feature value");

  std::vector<Label> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() == 1)
    return TrainedModel(spec.kind, std::move(classes), x.n_cols(), true,
                        detail::make_constant_model());

  std::vector<detail::ClassIndex> yi(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    yi[i] = static_cast<detail::ClassIndex>(
        std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());

  const detail::FitInput in{x, yi, classes.size(), spec.seed};
  detail::ImplPtr impl = std::visit(
      [&](const auto& p) -> detail::ImplPtr {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, RandomForestParams>) return detail::fit_random_forest(p, in);
        else if constexpr (std::is_same_v<P, SvmParams>) return detail::fit_svm(p, in);
        else if constexpr (std::is_same_v<P, GradientBoostingParams>)
          return detail::fit_gradient_boosting(p, in);
        else if constexpr (std::is_same_v<P, LogisticRegressionParams>)
          return detail::fit_logistic_regression(p, in);
        else if constexpr (std::is_same_v<P, MlpParams>) return detail::fit_mlp(p, in);
        else if constexpr (std::is_same_v<P, LdaParams>) return detail::fit_lda(p, in);
        else if constexpr (std::is_same_v<P, QdaParams>) return detail::fit_qda(p, in);
        else if constexpr (std::is_same_v<P, GaussianNbParams>) return detail::fit_gaussian_nb(p, in);
        else if constexpr (std::is_same_v<P, BaggingParams>) return detail::fit_bagging(p, in);
        else return detail::fit_decision_tree(p, in);
      },
      spec.params);
  return TrainedModel(spec.kind, std::move(classes), x.n_cols(), false, std::move(impl));
}

ProbaMatrix predict_proba(const TrainedModel& model, const DenseMatrix& x) {
  if (x.n_cols() != model.n_features())
    throw DimensionError("predict: model expects " + std::to_string(model.n_features()) +
                         " features, got " + std::to_string(x.n_cols()));
  if (x.n_rows() == 0) return DenseMatrix(0, model.classes().size());
  return model.impl().predict_proba(x);
}

std::vector<Label> argmax_labels(const ProbaMatrix& proba, std::span<const Label> classes) {
  if (proba.n_cols() != classes.size())
    throw DimensionError("probability columns do not match class count");
  std::vector<Label> out(proba.n_rows());
  for (std::size_t i = 0; i < proba.n_rows(); ++i) {
    const auto row = proba.row(i);
    // First maximum wins, i.e. the lowest class id on ties.
    out[i] = classes[std::max_element(row.begin(), row.end()) - row.begin()];
  }
  return out;
}

std::vector<Label> predict(const TrainedModel& model, const DenseMatrix& x) {
  return argmax_labels(predict_proba(model, x), model.classes());
}

double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size())
    throw DimensionError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " labels");
  if (truth.empty()) throw DimensionError("accuracy of an empty label set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<std::uint8_t> encode_model(const TrainedModel& model) {
  ByteWriter w;
  w.bytes("PSMD");
  w.u8(kModelVersion);
  w.u8(static_cast<std::uint8_t>(model.kind()));
  w.u8(model.degenerate() ? 1 : 0);
  w.u64(model.n_features());
  w.u64(model.classes().size());
  w.array(std::span<const Label>(model.classes()));
  model.impl().encode(w);
  return w.take();
}

TrainedModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 5 || r.bytes(4) != "PSMD") throw FormatError("not a model container");
  if (r.u8() != kModelVersion) throw FormatError("unsupported model container version");
  const auto kind_byte = r.u8();
  if (kind_byte > static_cast<std::uint8_t>(LearnerKind::DecisionTree))
    throw FormatError("unknown learner kind in model container");
  const auto kind = static_cast<LearnerKind>(kind_byte);
  const auto degenerate_byte = r.u8();
  if (degenerate_byte > 1) throw FormatError("bad degenerate flag");
  const auto n_features = r.u64();
  auto classes = r.array<Label>(r.u64());
  auto impl = detail::decode_impl(kind, degenerate_byte == 1, r);
  if (!r.at_end()) throw FormatError("trailing bytes after model");
  try {
    return TrainedModel(kind, std::move(classes), n_features, degenerate_byte == 1, std::move(impl));
  } catch (const DimensionError& e) {
    throw FormatError(e.what());
  }
}

namespace detail {

namespace {

class ConstantModel final : public ModelImpl {
 public:
  DenseMatrix predict_proba(const DenseMatrix& x) const override {
    return DenseMatrix(x.n_rows(), 1, 1.0);
  }
  void encode(ByteWriter&) const override {}
};

}  // namespace

ImplPtr make_constant_model() { return std::make_shared<ConstantModel>(); }

ImplPtr decode_impl(LearnerKind kind, bool degenerate, ByteReader& r) {
  if (degenerate) return make_constant_model();
  switch (kind) {
    case LearnerKind::RandomForest:
    case LearnerKind::Bagging: return decode_forest_model(r);
    case LearnerKind::DecisionTree: return decode_tree_model(r);
    case LearnerKind::GradientBoosting: return decode_boosting_model(r);
    case LearnerKind::LogisticRegression:
    case LearnerKind::Svm: return decode_linear_model(r);
    case LearnerKind::Mlp: return decode_mlp_model(r);
    case LearnerKind::Lda: return decode_lda_model(r);
    case LearnerKind::Qda: return decode_qda_model(r);
    case LearnerKind::GaussianNb: return decode_nb_model(r);
  }
  throw FormatError("unknown learner kind");
}

void softmax_rows(DenseMatrix& scores) {
  for (std::size_t i = 0; i < scores.n_rows(); ++i) {
    auto row = scores.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

void write_doubles(ByteWriter& w, std::span<const double> v) {
  w.u64(v.size());
  w.array(v);
}

std::vector<double> read_doubles(ByteReader& r) { return r.array<double>(r.u64()); }

}  // namespace detail

}  // namespace poisonstack
