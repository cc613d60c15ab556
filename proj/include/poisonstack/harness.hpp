#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "poisonstack/ensembles.hpp"
#include "poisonstack/ingest.hpp"
#include "poisonstack/learners.hpp"
#include "poisonstack/poisoning.hpp"

namespace poisonstack {

inline constexpr std::string_view kLibraryVersion = "1.0.0";

enum class SourceKind : std::uint8_t { Synthetic, RawJson, Container };

struct LearnerOverride {
  LearnerKind kind;
  std::string name;
  std::string value;
};

struct ExperimentConfig {
  SourceKind source = SourceKind::Synthetic;
  std::string source_path;
  SyntheticSpec synthetic;  // its seed is derived from `seed`

  bool normalize = false;
  NormalizationMode normalization = NormalizationMode::MinMaxSymmetric;
  Index svd_k = 50;  // 0 keeps the raw features (densified)
  SplitSpec split;   // its seed is derived from `seed`
  double feature_rate = 0.2;
  double label_rate = 0.2;

  std::vector<LearnerKind> roster{kAllLearners.begin(), kAllLearners.end()};
  std::vector<LearnerOverride> overrides;

  bool run_base_grid = true;
  bool run_best_of = true;
  bool run_all_models = true;
  bool run_soft_vote = true;

  std::vector<StackMode> stack_modes{StackMode::OutOfFold, StackMode::InSample};
  std::size_t folds = 5;
  StackEncoding encoding = StackEncoding::LabelOneHot;
  std::vector<LearnerKind> best_of_level2{kAllLearners.begin(), kAllLearners.end()};
  std::vector<LearnerKind> all_models_level2{LearnerKind::GradientBoosting, LearnerKind::Svm};
  LearnerKind soft_vote_level2 = LearnerKind::Svm;

  std::size_t repeats = 1;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  // Canonical key = value text; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
};

// "key = value" lines, '#' comments. Unknown keys and malformed values throw
// ConfigError. Learner hyperparameters use "learner.<kind>.<name> = value".
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
// Applies a single key = value pair (used by the parser and CLI overrides).
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Learner spec the harness uses for `kind` in a repeat: defaults, overrides,
// and a seed derived from the master seed.
LearnerSpec harness_learner(const ExperimentConfig& cfg, LearnerKind kind, std::size_t repeat = 0);

// Named separability levels accepted by "synthetic.separability".
double separability_preset(std::string_view name);  // throws ConfigError

struct AccuracyTable {
  std::string name;   // report key: base, best_of, all_models, soft_vote
  std::string title;
  std::string mode;   // "base" or a stack mode
  std::vector<std::string> row_ids;
  std::vector<std::string> row_labels;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> mean;  // rows × columns
  std::vector<std::vector<double>> sd;    // sample standard deviation over repeats
  std::uint64_t seed = 0;
  Index svd_k = 0;
  std::size_t repeats = 1;

  std::size_t n_rows() const { return row_ids.size(); }
  std::size_t n_cols() const { return columns.size(); }
};

struct TopPick {
  std::string column;
  std::string row_id;     // empty when exhausted
  bool exhausted = false;  // every row was already taken by an earlier column
};

// Column by column, the best row not yet chosen by an earlier column; ties go
// to the earlier row.
std::vector<TopPick> select_top_models(const AccuracyTable& table);

struct StackGrids {
  std::vector<AccuracyTable> best_of;     // one per stack mode
  std::vector<AccuracyTable> all_models;  // one per stack mode
};

struct SoftVoteResult {
  double accuracy = 0.0;  // mean over repeats
  std::vector<double> member_accuracy;  // C1, C2, C3 stacks
  AccuracyTable table;
};

struct PreparedData {
  Dataset validation;
  Dataset c1, c2, c3;  // dense, reduced
  PerturbationReport feature_report;
  PerturbationReport label_report;
  int svd_passes = 0;
};

// Runs the pipeline stages on demand, sharing data and fitted models between
// them. All results are pure functions of the config.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);
  ~Experiment();
  Experiment(Experiment&&) noexcept;

  const ExperimentConfig& config() const;
  const PreparedData& data(std::size_t repeat);
  const AccuracyTable& base_grid();
  StackGrids stack_grids(const std::vector<TopPick>& top);
  SoftVoteResult soft_vote();
  // Seconds spent per stage, in first-run order.
  const std::vector<std::pair<std::string, double>>& timings() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

AccuracyTable run_base_grid(const ExperimentConfig& cfg);
StackGrids run_stack_grids(const ExperimentConfig& cfg, const std::vector<TopPick>& top);
SoftVoteResult run_soft_vote(const ExperimentConfig& cfg);

enum class ReportFormat { Csv, Markdown };

// Byte-deterministic renderings. CSV: model,dataset,accuracy,seed,svd_k,mode,repeats.
std::string render_csv(const std::vector<AccuracyTable>& tables);
std::string render_markdown(const std::vector<AccuracyTable>& tables,
                            const std::vector<TopPick>& top = {});

struct RunManifest {
  std::string config_digest;  // sha1 of the canonical config text
  std::string library_version{kLibraryVersion};
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, git blob digest
  std::vector<std::pair<std::string, double>> timings;
  std::vector<std::string> notes;

  std::string to_json() const;
};

// Writes the tables in `format` to `path`; returns the written bytes' blob digest.
// Throws IoError.
std::string emit_report(const std::vector<AccuracyTable>& tables, ReportFormat format,
                        const std::string& path, const std::vector<TopPick>& top = {});

struct ExperimentReport {
  std::vector<AccuracyTable> tables;
  std::vector<TopPick> top;
  RunManifest manifest;
};

// Every enabled stage, then report.csv, report.md and manifest.json in the
// output directory.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace poisonstack
