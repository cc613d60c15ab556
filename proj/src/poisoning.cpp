#include "poisonstack/poisoning.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/digest.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

std::string_view to_string(PerturbationScheme scheme) {
  return scheme == PerturbationScheme::Features ? "C2" : "C3";
}

std::string PerturbationReport::to_json() const {
  nlohmann::ordered_json j;
  j["scheme"] = std::string(to_string(scheme));
  j["rate"] = rate;
  j["n_targets"] = n_targets;
  j["target_fraction"] = target_fraction;
  j["n_changed"] = n_changed;
  j["seed"] = seed;
  j["targets_digest"] = targets_digest;
  return j.dump(2) + "\n";
}

namespace {

void check_rate(double rate) {
  if (!(rate > 0.0 && rate < 1.0))
    throw ConfigError("perturbation rate " + std::to_string(rate) + " outside (0, 1)");
}

}  // namespace

Split split_validation(const Dataset& base, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in (0, 1)");
  base.validate();
  const std::size_t n = base.n_rows();
  const std::size_t target = round_half_up(spec.validation_fraction * static_cast<double>(n));

  std::vector<bool> in_validation(n, false);
  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> members(base.n_classes);
    for (std::size_t i = 0; i < n; ++i) members[base.labels[i]].push_back(i);
    for (std::uint32_t c = 0; c < base.n_classes; ++c)
      if (members[c].size() == 1)
        throw StratifyError("class " + std::to_string(c) + " has a single sample");

    // Largest-remainder apportionment keeps each class within ±1 of its share.
    std::vector<std::size_t> quota(base.n_classes);
    std::vector<std::pair<double, std::uint32_t>> remainders;
    std::size_t assigned = 0;
    for (std::uint32_t c = 0; c < base.n_classes; ++c) {
      const double ideal = spec.validation_fraction * static_cast<double>(members[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(ideal));
      assigned += quota[c];
      if (!members[c].empty()) remainders.emplace_back(ideal - std::floor(ideal), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned)
      ++quota[remainders[i].second];

    for (std::uint32_t c = 0; c < base.n_classes; ++c) {
      Rng rng(derive_seed(spec.seed, "split", c));
      for (std::size_t pick : rng.sample_without_replacement(members[c].size(), quota[c]))
        in_validation[members[c][pick]] = true;
    }
  } else {
    Rng rng(derive_seed(spec.seed, "split"));
    for (std::size_t pick : rng.sample_without_replacement(n, target)) in_validation[pick] = true;
  }

  std::vector<std::size_t> v_rows, c_rows;
  for (std::size_t i = 0; i < n; ++i) (in_validation[i] ? v_rows : c_rows).push_back(i);
  Split out{select_rows(base, v_rows), select_rows(base, c_rows)};
  out.validation.provenance = {DatasetRole::V, spec.seed};
  out.training.provenance = {DatasetRole::C1, spec.seed};
  return out;
}

std::pair<Dataset, PerturbationReport> perturb_features(const Dataset& clean, double rate,
                                                        std::uint64_t seed) {
  check_rate(rate);
  const CsrMatrix& x = clean.sparse();
  const std::size_t n = x.n_rows();
  const std::size_t m = x.n_cols();
  const std::size_t per_row = round_half_up(rate * static_cast<double>(m));

  std::vector<std::vector<Index>> row_cols(n);
  std::vector<std::vector<double>> row_vals(n);
  std::vector<std::vector<Index>> targets(n);
  std::vector<std::size_t> changed(n, 0);

  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    const auto r = static_cast<Index>(ri);
    Rng rng(derive_seed(seed, "features", r));
    auto picks = rng.sample_without_replacement(m, per_row);

    // Fill draws follow selection order.
    std::vector<std::pair<Index, double>> updates;
    updates.reserve(picks.size());
    for (std::size_t col : picks) {
      const double old = x.at(r, col);
      const double fresh = old != 0.0 ? 1.5 * old : static_cast<double>(rng.between(1, 10)) * 0.1;
      updates.emplace_back(col, fresh);
    }
    std::sort(updates.begin(), updates.end());

    const auto cols = x.row_cols(r);
    const auto vals = x.row_values(r);
    auto& out_c = row_cols[r];
    auto& out_v = row_vals[r];
    out_c.reserve(cols.size() + updates.size());
    out_v.reserve(cols.size() + updates.size());
    std::size_t a = 0, b = 0;
    while (a < cols.size() || b < updates.size()) {
      if (b == updates.size() || (a < cols.size() && cols[a] < updates[b].first)) {
        out_c.push_back(cols[a]);
        out_v.push_back(vals[a]);
        ++a;
      } else {
        if (a < cols.size() && cols[a] == updates[b].first) ++a;
        out_c.push_back(updates[b].first);
        out_v.push_back(updates[b].second);
        ++b;
      }
    }
    for (const auto& u : updates) targets[r].push_back(u.first);
    changed[r] = updates.size();
  }

  std::vector<Index> row_ptr(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) row_ptr[r + 1] = row_ptr[r] + row_cols[r].size();
  std::vector<Index> col_idx;
  std::vector<double> values;
  col_idx.reserve(row_ptr[n]);
  values.reserve(row_ptr[n]);
  ByteWriter digest_input;
  for (std::size_t r = 0; r < n; ++r) {
    col_idx.insert(col_idx.end(), row_cols[r].begin(), row_cols[r].end());
    values.insert(values.end(), row_vals[r].begin(), row_vals[r].end());
    digest_input.u64(r);
    digest_input.array(std::span<const Index>(targets[r]));
  }

  Dataset out;
  out.features = CsrMatrix(n, m, std::move(row_ptr), std::move(col_idx), std::move(values));
  out.labels = clean.labels;
  out.n_classes = clean.n_classes;
  out.provenance = {DatasetRole::C2, seed};

  PerturbationReport report;
  report.scheme = PerturbationScheme::Features;
  report.rate = rate;
  report.n_targets = per_row * n;
  report.target_fraction = m ? static_cast<double>(per_row) / static_cast<double>(m) : 0.0;
  report.n_changed = 0;
  for (std::size_t c : changed) report.n_changed += c;
  report.seed = seed;
  report.targets_digest = sha1_hex(digest_input.buffer());
  return {std::move(out), std::move(report)};
}

std::pair<Dataset, PerturbationReport> perturb_labels(const Dataset& clean, double rate,
                                                      std::uint64_t seed) {
  check_rate(rate);
  clean.validate();
  const std::size_t n = clean.labels.size();
  const std::size_t count = round_half_up(rate * static_cast<double>(n));

  Rng rng(derive_seed(seed, "labels"));
  auto picks = rng.sample_without_replacement(n, count);

  Dataset out = clean;
  out.provenance = {DatasetRole::C3, seed};
  std::size_t changed = 0;
  for (std::size_t i : picks) {
    const auto fresh = static_cast<Label>(rng.below(clean.n_classes));
    if (fresh != out.labels[i]) ++changed;
    out.labels[i] = fresh;
  }

  std::sort(picks.begin(), picks.end());
  ByteWriter digest_input;
  for (std::size_t i : picks) digest_input.u64(i);

  PerturbationReport report;
  report.scheme = PerturbationScheme::Labels;
  report.rate = rate;
  report.n_targets = count;
  report.target_fraction = n ? static_cast<double>(count) / static_cast<double>(n) : 0.0;
  report.n_changed = changed;
  report.seed = seed;
  report.targets_digest = sha1_hex(digest_input.buffer());
  return {std::move(out), std::move(report)};
}

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (spec.signal_columns == 0) throw ConfigError("signal_columns must be positive");
  if (spec.signal_columns * spec.n_classes > spec.n_features)
    throw ConfigError("signal_columns * n_classes exceeds n_features");
  auto open_unit = [](double p) { return p > 0.0 && p < 1.0; };
  if (!open_unit(spec.signal_density) || !open_unit(spec.background_density))
    throw ConfigError("densities must lie in (0, 1)");
  if (!(spec.separability >= 0.0 && spec.separability <= 1.0))
    throw ConfigError("separability must lie in [0, 1]");
  if (!(spec.value_min > 0.0 && spec.value_max >= spec.value_min))
    throw ConfigError("value range must be positive and ordered");

  const std::size_t n = spec.n_samples;
  const std::size_t m = spec.n_features;
  const std::size_t block = spec.signal_columns;
  const std::size_t signal_end = block * spec.n_classes;

  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(i % spec.n_classes);
  Rng label_rng(derive_seed(spec.seed, "synthetic-labels"));
  label_rng.shuffle(labels);

  const double leak = (1.0 - spec.separability) * spec.signal_density;
  std::vector<Index> row_ptr(n + 1, 0);
  std::vector<Index> col_idx;
  std::vector<double> values;
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(derive_seed(spec.seed, "synthetic-row", r));
    const std::size_t own = labels[r] * block;
    const std::size_t forced = own + static_cast<std::size_t>(rng.below(block));
    for (std::size_t c = 0; c < m; ++c) {
      double p;
      if (c >= signal_end) {
        p = spec.background_density;
      } else if (c >= own && c < own + block) {
        p = spec.signal_density;
      } else {
        p = leak;
      }
      const bool active = rng.bernoulli(p) || c == forced;
      if (active) {
        col_idx.push_back(c);
        values.push_back(rng.uniform(spec.value_min, spec.value_max));
      }
    }
    row_ptr[r + 1] = values.size();
  }

  Dataset ds;
  ds.features = CsrMatrix(n, m, std::move(row_ptr), std::move(col_idx), std::move(values));
  ds.labels = std::move(labels);
  ds.n_classes = spec.n_classes;
  ds.provenance = {DatasetRole::Synthetic, spec.seed};
  return ds;
}

}  // namespace poisonstack
