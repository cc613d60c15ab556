#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "poisonstack/dataset.hpp"

namespace poisonstack {

// round(x) with halves rounded up; the counting rule for every perturbation.
std::size_t round_half_up(double x);

struct SplitSpec {
  double validation_fraction = 0.25;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  Dataset validation;  // V
  Dataset training;    // C1
};

// |V| = round(fraction·N). V and C1 partition the rows, each keeping the
// original row order. Stratified mode holds every class within ±1 sample of
// its proportional share. Throws ConfigError, StratifyError.
Split split_validation(const Dataset& base, const SplitSpec& spec);

enum class PerturbationScheme : std::uint8_t { Features, Labels };

std::string_view to_string(PerturbationScheme scheme);

struct PerturbationReport {
  PerturbationScheme scheme = PerturbationScheme::Features;
  double rate = 0.0;
  std::size_t n_targets = 0;    // positions (C2) or labels (C3) selected
  double target_fraction = 0.0; // per row for C2, over all labels for C3
  std::size_t n_changed = 0;    // entries whose value actually differs
  std::uint64_t seed = 0;
  std::string targets_digest;   // sha1 over the selected indices

  std::string to_json() const;
};

// C2. For every row, round(rate·M) distinct columns are chosen uniformly;
// a stored nonzero x becomes 1.5x, an absent or zero entry becomes r·0.1 with
// r uniform in {1..10}. Rows draw from independent sub-seeds, so the result
// does not depend on thread scheduling. Labels are copied unchanged.
std::pair<Dataset, PerturbationReport> perturb_features(const Dataset& clean, double rate,
                                                        std::uint64_t seed);

// C3. round(rate·N) distinct rows are chosen uniformly; each selected label is
// redrawn uniformly over all classes (the original class included). Features
// are copied unchanged.
std::pair<Dataset, PerturbationReport> perturb_labels(const Dataset& clean, double rate,
                                                      std::uint64_t seed);

// Class-conditional sparse corpus standing in for the malware archive. Class c
// owns columns [c·signal_columns, (c+1)·signal_columns). A sample activates
// each of its own signal columns with probability signal_density (at least
// one is forced on), each other class's signal column with probability
// (1 − separability)·signal_density, and each remaining column with
// probability background_density. Active values are uniform in
// [value_min, value_max]. At separability 1 the classes are linearly separable.
struct SyntheticSpec {
  std::size_t n_samples = 1000;
  std::size_t n_features = 200;
  std::uint32_t n_classes = 5;
  std::size_t signal_columns = 10;
  double signal_density = 0.3;
  double background_density = 0.05;
  double value_min = 1.0;
  double value_max = 5.0;
  double separability = 1.0;
  std::uint64_t seed = 0;
};

Dataset make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace poisonstack
