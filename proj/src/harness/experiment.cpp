#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>

#include "../parallel.hpp"
#include "poisonstack/decomposition.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/harness.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

namespace {

constexpr std::array<std::string_view, 3> kTrainingSets = {"C1", "C2", "C3"};

// Runs `fn` as pipeline stage `name`, tagging library errors with the stage.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const EmptyValidation&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

DenseMatrix densify(const Dataset& ds) {
  return ds.is_sparse() ? to_dense(ds.sparse()) : ds.dense();
}

Dataset with_features(const Dataset& ds, DenseMatrix x, DatasetRole role) {
  Dataset out;
  out.features = std::move(x);
  out.labels = ds.labels;
  out.n_classes = ds.n_classes;
  out.provenance = {role, ds.provenance.seed};
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Per-repeat accuracies, [repeat][row][col], folded into a table.
void fill_cells(AccuracyTable& t, const std::vector<std::vector<std::vector<double>>>& acc) {
  t.mean.assign(t.n_rows(), std::vector<double>(t.n_cols()));
  t.sd = t.mean;
  for (std::size_t r = 0; r < t.n_rows(); ++r)
    for (std::size_t c = 0; c < t.n_cols(); ++c) {
      std::vector<double> samples;
      for (const auto& rep : acc) samples.push_back(rep[r][c]);
      t.mean[r][c] = mean_of(samples);
      t.sd[r][c] = sd_of(samples);
    }
}

}  // namespace

struct Experiment::State {
  ExperimentConfig cfg;
  std::optional<Dataset> source;
  std::vector<std::optional<PreparedData>> data;
  std::optional<AccuracyTable> base;
  // [repeat][training set] → full-training-set base models by learner.
  std::vector<std::array<std::map<LearnerKind, TrainedModel>, 3>> base_models;
  // (repeat, training set, mode) → all-roster level-1 output.
  std::map<std::tuple<std::size_t, std::size_t, StackMode>, Level1Output> level1;
  std::vector<std::pair<std::string, double>> timings;

  class Timer {
   public:
    Timer(State& s, std::string name)
        : s_(s), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~Timer() {
      const double dt =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      for (auto& [n, t] : s_.timings)
        if (n == name_) {
          t += dt;
          return;
        }
      s_.timings.emplace_back(name_, dt);
    }

   private:
    State& s_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
  };

  std::uint32_t n_classes() { return prepared(0).c1.n_classes; }

  const Dataset& load_source() {
    if (source) return *source;
    source = stage("source", [&] {
      switch (cfg.source) {
        case SourceKind::Synthetic: {
          auto spec = cfg.synthetic;
          spec.seed = derive_seed(cfg.seed, "synthetic");
          return make_synthetic_dataset(spec);
        }
        case SourceKind::RawJson:
          return assemble_feature_matrix(load_raw_json(cfg.source_path));
        case SourceKind::Container:
          return load_container(cfg.source_path);
      }
      throw ConfigError("unknown source");
    });
    return *source;
  }

  const PreparedData& prepared(std::size_t rep) {
    if (data.size() < cfg.repeats) data.resize(cfg.repeats);
    if (data.at(rep)) return *data[rep];
    Timer timer(*this, "prepare");
    const Dataset& base = load_source();

    auto split = stage("split", [&] {
      SplitSpec s = cfg.split;
      s.seed = derive_seed(cfg.seed, "split", rep);
      return split_validation(base, s);
    });
    if (split.validation.n_rows() == 0)
      throw EmptyValidation("the validation split is empty");

    if (cfg.normalize) {
      stage("normalize", [&] {
        const auto spec = fit_normalizer(split.training, cfg.normalization);
        split.training = apply_normalizer(spec, split.training);
        split.validation = apply_normalizer(spec, split.validation);
        return 0;
      });
    }

    PreparedData out;
    auto [c2, feature_report] = stage("poison-features", [&] {
      return perturb_features(split.training, cfg.feature_rate,
                              derive_seed(cfg.seed, "poison-features", rep));
    });
    auto [c3, label_report] = stage("poison-labels", [&] {
      return perturb_labels(split.training, cfg.label_rate,
                            derive_seed(cfg.seed, "poison-labels", rep));
    });
    out.feature_report = feature_report;
    out.label_report = label_report;

    stage("svd", [&] {
      DenseMatrix v, x1, x2;
      if (cfg.svd_k == 0) {
        v = densify(split.validation);
        x1 = densify(split.training);
        x2 = densify(c2);
      } else {
        const auto seed = derive_seed(cfg.seed, "svd", rep);
        const auto model = std::visit(
            [&](const auto& m) { return fit_truncated_svd(m, cfg.svd_k, seed); },
            split.training.features);
        auto project = [&](const Dataset& ds) {
          return std::visit([&](const auto& m) { return transform(model, m); }, ds.features);
        };
        v = project(split.validation);
        x1 = project(split.training);
        x2 = project(c2);
        out.svd_passes = model.power_iterations;
      }
      out.validation = with_features(split.validation, std::move(v), DatasetRole::V);
      out.c1 = with_features(split.training, x1, DatasetRole::C1);
      out.c2 = with_features(c2, std::move(x2), DatasetRole::C2);
      // C3 shares C1's projected features.
      out.c3 = with_features(c3, std::move(x1), DatasetRole::C3);
      return 0;
    });
    data[rep] = std::move(out);
    return *data[rep];
  }

  const Dataset& training(std::size_t rep, std::size_t j) {
    const auto& d = prepared(rep);
    return j == 0 ? d.c1 : j == 1 ? d.c2 : d.c3;
  }

  const AccuracyTable& base_grid() {
    if (base) return *base;
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) prepared(rep);
    Timer timer(*this, "base_grid");
    const auto& roster = cfg.roster;
    base_models.assign(cfg.repeats, {});
    std::vector<std::vector<std::vector<double>>> acc(
        cfg.repeats, std::vector<std::vector<double>>(roster.size(), std::vector<double>(3)));
    std::vector<std::optional<TrainedModel>> models(cfg.repeats * roster.size() * 3);
    detail::parallel_for(models.size(), [&](std::size_t job) {
      const std::size_t rep = job / (roster.size() * 3);
      const std::size_t i = job / 3 % roster.size();
      const std::size_t j = job % 3;
      const auto kind = roster[i];
      const auto& train = training(rep, j);
      const auto& v = prepared(rep).validation;
      stage("base_grid/" + std::string(to_string(kind)) + "/" + std::string(kTrainingSets[j]),
            [&] {
              models[job] = fit(harness_learner(cfg, kind, rep), train.dense(), train.labels);
              acc[rep][i][j] = accuracy(predict(*models[job], v.dense()), v.labels);
              return 0;
            });
    });
    for (std::size_t job = 0; job < models.size(); ++job) {
      const std::size_t rep = job / (roster.size() * 3);
      base_models[rep][job % 3].emplace(roster[job / 3 % roster.size()], *models[job]);
    }

    AccuracyTable t;
    t.name = "base";
    t.title = "Base model classification accuracy";
    t.mode = "base";
    for (auto k : roster) {
      t.row_ids.emplace_back(to_string(k));
      t.row_labels.emplace_back(display_name(k));
    }
    t.columns = {"C1", "C2", "C3"};
    t.seed = cfg.seed;
    t.svd_k = cfg.svd_k;
    t.repeats = cfg.repeats;
    fill_cells(t, acc);
    base = std::move(t);
    return *base;
  }

  StackSpec roster_stack(std::size_t rep, StackMode mode) {
    StackSpec spec;
    for (auto k : cfg.roster) spec.level1.push_back(harness_learner(cfg, k, rep));
    spec.level2 = harness_learner(cfg, cfg.roster.front(), rep);
    spec.mode = mode;
    spec.folds = cfg.folds;
    spec.encoding = cfg.encoding;
    return spec;
  }

  std::uint64_t stack_seed(std::size_t rep) { return derive_seed(cfg.seed, "stack", rep); }

  // Level-1 output for the whole roster; fitted once per (repeat, set, mode)
  // and sliced for smaller stacks.
  const Level1Output& level1_for(std::size_t rep, std::size_t j, StackMode mode) {
    const auto key = std::make_tuple(rep, j, mode);
    if (const auto it = level1.find(key); it != level1.end()) return it->second;
    const auto& train = training(rep, j);
    std::vector<std::pair<LearnerSpec, TrainedModel>> prefit;
    if (rep < base_models.size())
      for (const auto& [kind, model] : base_models[rep][j])
        prefit.emplace_back(harness_learner(cfg, kind, rep), model);
    auto out = stage("stack-level1/" + std::string(to_string(mode)) + "/" +
                         std::string(kTrainingSets[j]),
                     [&] {
                       return fit_level1(roster_stack(rep, mode), train.dense(), train.labels,
                                         train.n_classes, stack_seed(rep), prefit);
                     });
    return level1.emplace(key, std::move(out)).first->second;
  }

  static Level1Output slice(const Level1Output& full, const std::vector<LearnerSpec>& wanted) {
    Level1Output out;
    for (const auto& spec : canonical_order(wanted)) {
      const auto key = spec.describe();
      std::size_t i = 0;
      while (i < full.specs.size() && full.specs[i].describe() != key) ++i;
      if (i == full.specs.size()) throw ConfigError("stack member '" + key + "' is not in the roster");
      out.specs.push_back(full.specs[i]);
      out.models.push_back(full.models[i]);
      out.train_labels.push_back(full.train_labels[i]);
      out.train_proba.push_back(full.train_proba[i]);
    }
    return out;
  }

  // Level-2 sweep over a fixed level 1: [repeat][level2][training set].
  AccuracyTable sweep(const std::string& name, const std::string& title, StackMode mode,
                      const std::vector<LearnerKind>& members,
                      const std::vector<LearnerKind>& level2_roster) {
    std::vector<std::vector<std::vector<double>>> acc(
        cfg.repeats,
        std::vector<std::vector<double>>(level2_roster.size(), std::vector<double>(3)));
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
      std::vector<LearnerSpec> wanted;
      for (auto k : members) wanted.push_back(harness_learner(cfg, k, rep));
      std::array<Level1Output, 3> l1;
      for (std::size_t j = 0; j < 3; ++j) l1[j] = slice(level1_for(rep, j, mode), wanted);
      const auto& v = prepared(rep).validation;
      detail::parallel_for(level2_roster.size() * 3, [&](std::size_t job) {
        const std::size_t i = job / 3, j = job % 3;
        const auto& train = training(rep, j);
        StackSpec spec = roster_stack(rep, mode);
        spec.level1 = wanted;
        spec.level2 = harness_learner(cfg, level2_roster[i], rep);
        stage(name + "/" + std::string(to_string(mode)) + "/" +
                  std::string(to_string(level2_roster[i])) + "/" + std::string(kTrainingSets[j]),
              [&] {
                const auto model =
                    fit_level2(spec, l1[j], train.labels, train.n_classes, stack_seed(rep));
                acc[rep][i][j] = accuracy(predict_stack(model, v.dense()), v.labels);
                return 0;
              });
      });
    }
    AccuracyTable t;
    t.name = name;
    t.title = title;
    t.mode = std::string(to_string(mode));
    for (auto k : level2_roster) {
      t.row_ids.emplace_back(to_string(k));
      t.row_labels.emplace_back(display_name(k));
    }
    t.columns = {"C1", "C2", "C3"};
    t.seed = cfg.seed;
    t.svd_k = cfg.svd_k;
    t.repeats = cfg.repeats;
    fill_cells(t, acc);
    return t;
  }
};

Experiment::Experiment(ExperimentConfig cfg) : state_(std::make_unique<State>()) {
  cfg.validate();
  state_->cfg = std::move(cfg);
}

Experiment::~Experiment() = default;
Experiment::Experiment(Experiment&&) noexcept = default;

const ExperimentConfig& Experiment::config() const { return state_->cfg; }

const PreparedData& Experiment::data(std::size_t repeat) {
  if (repeat >= state_->cfg.repeats) throw ConfigError("repeat index out of range");
  return state_->prepared(repeat);
}

const AccuracyTable& Experiment::base_grid() { return state_->base_grid(); }

const std::vector<std::pair<std::string, double>>& Experiment::timings() const {
  return state_->timings;
}

StackGrids Experiment::stack_grids(const std::vector<TopPick>& top) {
  auto& s = *state_;
  for (std::size_t rep = 0; rep < s.cfg.repeats; ++rep) s.prepared(rep);
  StackGrids out;
  std::vector<LearnerKind> picks;
  std::string pick_names;
  for (const auto& p : top) {
    if (p.exhausted) continue;
    const auto kind = parse_learner_kind(p.row_id);
    if (std::find(picks.begin(), picks.end(), kind) != picks.end()) continue;
    picks.push_back(kind);
    pick_names += (pick_names.empty() ? "" : ", ") + std::string(display_name(kind));
  }
  for (auto mode : s.cfg.stack_modes) {
    if (s.cfg.run_best_of) {
      if (picks.empty()) throw ConfigError("no top models selected for the best-of stack");
      State::Timer timer(s, "best_of");
      out.best_of.push_back(s.sweep("best_of", "Stacked model accuracy, level 1 = " + pick_names,
                                    mode, picks, s.cfg.best_of_level2));
    }
    if (s.cfg.run_all_models) {
      State::Timer timer(s, "all_models");
      out.all_models.push_back(s.sweep("all_models", "Stack across all models", mode,
                                       s.cfg.roster, s.cfg.all_models_level2));
    }
  }
  return out;
}

SoftVoteResult Experiment::soft_vote() {
  auto& s = *state_;
  for (std::size_t rep = 0; rep < s.cfg.repeats; ++rep) s.prepared(rep);
  State::Timer timer(s, "soft_vote");
  const auto mode = s.cfg.stack_modes.front();
  std::vector<std::vector<std::vector<double>>> acc(
      s.cfg.repeats, std::vector<std::vector<double>>(1, std::vector<double>(4)));
  for (std::size_t rep = 0; rep < s.cfg.repeats; ++rep) {
    const auto& v = s.prepared(rep).validation;
    if (v.n_rows() == 0) throw EmptyValidation("the validation split is empty");
    VotingEnsemble ensemble;
    ensemble.n_classes = s.n_classes();
    std::array<std::optional<StackedModel>, 3> members;
    for (std::size_t j = 0; j < 3; ++j) s.level1_for(rep, j, mode);
    detail::parallel_for(3, [&](std::size_t j) {
      const auto& train = s.training(rep, j);
      StackSpec spec = s.roster_stack(rep, mode);
      spec.level2 = harness_learner(s.cfg, s.cfg.soft_vote_level2, rep);
      members[j] = stage("soft_vote/" + std::string(kTrainingSets[j]), [&] {
        return fit_level2(spec, s.level1_for(rep, j, mode), train.labels, train.n_classes,
                          s.stack_seed(rep));
      });
    });
    for (std::size_t j = 0; j < 3; ++j) {
      acc[rep][0][j] = accuracy(predict_stack(*members[j], v.dense()), v.labels);
      ensemble.members.push_back(*members[j]);
    }
    acc[rep][0][3] = stage("soft_vote/vote", [&] {
      return accuracy(poisonstack::soft_vote(ensemble, v.dense()), v.labels);
    });
  }
  SoftVoteResult out;
  auto& t = out.table;
  t.name = "soft_vote";
  t.title = "Soft vote over the per-set all-model stacks";
  t.mode = std::string(to_string(mode));
  t.row_ids = {std::string(to_string(s.cfg.soft_vote_level2))};
  t.row_labels = {std::string(display_name(s.cfg.soft_vote_level2))};
  t.columns = {"C1", "C2", "C3", "Vote"};
  t.seed = s.cfg.seed;
  t.svd_k = s.cfg.svd_k;
  t.repeats = s.cfg.repeats;
  fill_cells(t, acc);
  out.accuracy = t.mean[0][3];
  out.member_accuracy = {t.mean[0][0], t.mean[0][1], t.mean[0][2]};
  return out;
}

std::vector<TopPick> select_top_models(const AccuracyTable& table) {
  std::vector<TopPick> out;
  std::vector<bool> taken(table.n_rows(), false);
  for (std::size_t c = 0; c < table.n_cols(); ++c) {
    TopPick pick{table.columns[c], "", true};
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < table.n_rows(); ++r)
      if (!taken[r] && (!best || table.mean[r][c] > table.mean[*best][c])) best = r;
    if (best) {
      taken[*best] = true;
      pick.row_id = table.row_ids[*best];
      pick.exhausted = false;
    }
    out.push_back(pick);
  }
  return out;
}

AccuracyTable run_base_grid(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  return ex.base_grid();
}

StackGrids run_stack_grids(const ExperimentConfig& cfg, const std::vector<TopPick>& top) {
  Experiment ex(cfg);
  return ex.stack_grids(top);
}

SoftVoteResult run_soft_vote(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  return ex.soft_vote();
}

}  // namespace poisonstack
