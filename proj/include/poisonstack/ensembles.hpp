#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poisonstack/dataset.hpp"
#include "poisonstack/learners.hpp"

namespace poisonstack {

enum class StackMode : std::uint8_t {
  // Level 2 trains on level-1 predictions over the same rows level 1 saw.
  InSample = 0,
  // Level 2 trains on k-fold out-of-fold level-1 predictions; level 1 is then
  // refit on the full training set.
  OutOfFold = 1,
};

enum class StackEncoding : std::uint8_t {
  LabelOneHot = 0,  // |level1|·C columns
  RawLabels = 1,    // |level1| columns holding the class id
  ProbaConcat = 2,  // |level1|·C columns of class probabilities
};

std::string_view to_string(StackMode mode);
std::string_view to_string(StackEncoding encoding);
StackMode parse_stack_mode(std::string_view name);          // throws ConfigError
StackEncoding parse_stack_encoding(std::string_view name);  // throws ConfigError

struct StackSpec {
  std::vector<LearnerSpec> level1;
  LearnerSpec level2;
  StackMode mode = StackMode::OutOfFold;
  std::size_t folds = 5;
  StackEncoding encoding = StackEncoding::LabelOneHot;

  // Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  static StackSpec from_json(std::string_view text);
};

// Level-1 members ordered by (kind name, describe()). Level-2 feature columns
// follow this order, so permuting the input list never changes a stack.
std::vector<LearnerSpec> canonical_order(std::vector<LearnerSpec> specs);

// Stratified k-fold assignment: each class's rows are shuffled and dealt
// round-robin, continuing the deal across classes. Throws StratifyError when a
// present class has fewer than k rows, ConfigError when k < 2.
std::vector<std::size_t> assign_folds(std::span<const Label> labels, std::size_t k,
                                      std::uint64_t seed);

// Level-1 output on a training set: the fitted members plus the per-member
// predictions level 2 learns from (labels and C-column probabilities).
struct Level1Output {
  std::vector<LearnerSpec> specs;  // canonical order
  std::vector<TrainedModel> models;
  std::vector<std::vector<Label>> train_labels;
  std::vector<ProbaMatrix> train_proba;
};

// Fits level 1 as `spec` prescribes. `prefit` may supply full-training-set
// models for some members (matched by describe()), which are then reused
// instead of refit; they must have been fit on `x`, `y` with the same spec.
Level1Output fit_level1(const StackSpec& spec, const DenseMatrix& x, std::span<const Label> y,
                        std::uint32_t n_classes, std::uint64_t seed,
                        std::span<const std::pair<LearnerSpec, TrainedModel>> prefit = {});

// Level-2 input built from level-1 predictions.
DenseMatrix encode_level1(StackEncoding encoding, std::span<const std::vector<Label>> labels,
                          std::span<const ProbaMatrix> proba, std::uint32_t n_classes);

class StackedModel {
 public:
  StackedModel(StackSpec spec, std::vector<TrainedModel> level1, TrainedModel level2,
               std::uint32_t n_classes, std::uint64_t seed);

  const StackSpec& spec() const noexcept { return spec_; }
  const std::vector<TrainedModel>& level1() const noexcept { return level1_; }
  const TrainedModel& level2() const noexcept { return level2_; }
  std::uint32_t n_classes() const noexcept { return n_classes_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Index n_features() const { return level1_.front().n_features(); }

 private:
  StackSpec spec_;
  std::vector<TrainedModel> level1_;
  TrainedModel level2_;
  std::uint32_t n_classes_;
  std::uint64_t seed_;
};

// Throws ConfigError (empty level 1), StratifyError, DimensionError.
StackedModel fit_stack(const StackSpec& spec, const Dataset& train, std::uint64_t seed);
StackedModel fit_stack(const StackSpec& spec, const DenseMatrix& x, std::span<const Label> y,
                       std::uint32_t n_classes, std::uint64_t seed);
// Level 2 on top of an already fitted level 1 (sweeping level-2 learners).
StackedModel fit_level2(const StackSpec& spec, const Level1Output& level1,
                        std::span<const Label> y, std::uint32_t n_classes, std::uint64_t seed);

// N×C, column c for class c. Throws DimensionError.
ProbaMatrix predict_stack_proba(const StackedModel& model, const DenseMatrix& x);
std::vector<Label> predict_stack(const StackedModel& model, const DenseMatrix& x);

struct VotingEnsemble {
  std::vector<StackedModel> members;
  std::uint32_t n_classes = 0;
};

// Sum of member probabilities, argmax with ties to the lowest class id.
// Throws ConfigError when members disagree on the class set.
std::vector<Label> soft_vote(const VotingEnsemble& ensemble, const DenseMatrix& x);
std::vector<Label> soft_vote(std::span<const ProbaMatrix> member_proba);

// "PSSK" container: version u8, JSON spec sidecar (u64 length + text), seed,
// class count, then each level-1 model and the level-2 model as
// length-prefixed model containers.
std::vector<std::uint8_t> encode_stack(const StackedModel& model);
StackedModel decode_stack(std::span<const std::uint8_t> bytes);
// Writes the container and the spec sidecar to `path` + ".json".
void save_stack(const StackedModel& model, const std::string& path);
StackedModel load_stack(const std::string& path);

}  // namespace poisonstack
