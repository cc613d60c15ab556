#pragma once

#include <memory>
#include <span>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/learners.hpp"

namespace poisonstack::detail {

// Fitted parameters of one learner kind. Classes are addressed by index
// 0..n_classes-1; TrainedModel maps indices back to label ids.
class ModelImpl {
 public:
  virtual ~ModelImpl() = default;
  // Input width already checked; returns N × n_classes, rows sum to 1.
  virtual DenseMatrix predict_proba(const DenseMatrix& x) const = 0;
  virtual void encode(ByteWriter& w) const = 0;
};

using ImplPtr = std::shared_ptr<const ModelImpl>;
using ClassIndex = std::uint32_t;

struct FitInput {
  const DenseMatrix& x;
  std::span<const ClassIndex> y;
  std::size_t n_classes;
  std::uint64_t seed;
};

ImplPtr fit_decision_tree(const TreeParams& p, const FitInput& in);
ImplPtr fit_random_forest(const RandomForestParams& p, const FitInput& in);
ImplPtr fit_bagging(const BaggingParams& p, const FitInput& in);
ImplPtr fit_gradient_boosting(const GradientBoostingParams& p, const FitInput& in);
ImplPtr fit_logistic_regression(const LogisticRegressionParams& p, const FitInput& in);
ImplPtr fit_mlp(const MlpParams& p, const FitInput& in);
ImplPtr fit_svm(const SvmParams& p, const FitInput& in);
ImplPtr fit_lda(const LdaParams& p, const FitInput& in);
ImplPtr fit_qda(const QdaParams& p, const FitInput& in);
ImplPtr fit_gaussian_nb(const GaussianNbParams& p, const FitInput& in);

ImplPtr make_constant_model();
// Scores W x + b through a softmax; params hold W (c×d) then b (c).
ImplPtr make_linear_model(std::size_t n_classes, std::size_t n_features,
                          std::vector<double> params);

// Decoders read exactly what the matching encode() wrote.
ImplPtr decode_impl(LearnerKind kind, bool degenerate, ByteReader& r);
ImplPtr decode_tree_model(ByteReader& r);
ImplPtr decode_forest_model(ByteReader& r);
ImplPtr decode_boosting_model(ByteReader& r);
ImplPtr decode_linear_model(ByteReader& r);
ImplPtr decode_mlp_model(ByteReader& r);
ImplPtr decode_lda_model(ByteReader& r);
ImplPtr decode_qda_model(ByteReader& r);
ImplPtr decode_nb_model(ByteReader& r);

// In-place row softmax with max-subtraction.
void softmax_rows(DenseMatrix& scores);

void write_doubles(ByteWriter& w, std::span<const double> v);
std::vector<double> read_doubles(ByteReader& r);

}  // namespace poisonstack::detail
