#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <set>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/harness.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty())
    throw ConfigError(std::string(key) + ": cannot parse '" + std::string(text) + "'");
  return v;
}

bool parse_flag(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

std::vector<LearnerKind> parse_roster(std::string_view text) {
  std::vector<LearnerKind> out;
  for (const auto& name : split_list(text)) out.push_back(parse_learner_kind(name));
  return out;
}

std::string roster_text(const std::vector<LearnerKind>& roster) {
  std::string out;
  for (auto k : roster) out += (out.empty() ? "" : ",") + std::string(to_string(k));
  return out;
}

std::string_view source_name(SourceKind s) {
  switch (s) {
    case SourceKind::Synthetic: return "synthetic";
    case SourceKind::RawJson: return "raw_json";
    case SourceKind::Container: return "container";
  }
  return "?";
}

constexpr std::string_view kStageNames[] = {"base_grid", "best_of", "all_models", "soft_vote"};

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  std::string name;
  Setter set;
  Getter get;
};

template <typename T>
Key number_key(std::string name, T ExperimentConfig::*field) {
  return {name,
          [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.*field = parse_number<T>(k, v);
          },
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

template <typename T>
Key synthetic_key(std::string name, T SyntheticSpec::*field) {
  return {"synthetic." + name,
          [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.synthetic.*field = parse_number<T>(k, v);
          },
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(c.synthetic.*field);
            } else {
              return std::to_string(c.synthetic.*field);
            }
          }};
}

Key roster_key(std::string name, std::vector<LearnerKind> ExperimentConfig::*field) {
  return {name,
          [field](ExperimentConfig& c, std::string_view, std::string_view v) {
            c.*field = parse_roster(v);
          },
          [field](const ExperimentConfig& c) { return roster_text(c.*field); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"seed",
                 [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                   c.seed = parse_number<std::uint64_t>(key, v);
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    k.push_back({"source",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   for (auto s : {SourceKind::Synthetic, SourceKind::RawJson, SourceKind::Container})
                     if (v == source_name(s)) {
                       c.source = s;
                       return;
                     }
                   throw ConfigError("source: unknown kind '" + std::string(v) + "'");
                 },
                 [](const ExperimentConfig& c) { return std::string(source_name(c.source)); }});
    k.push_back({"source.path",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) { c.source_path = v; },
                 [](const ExperimentConfig& c) { return c.source_path; }});
    k.push_back(synthetic_key("n_samples", &SyntheticSpec::n_samples));
    k.push_back(synthetic_key("n_features", &SyntheticSpec::n_features));
    k.push_back(synthetic_key("n_classes", &SyntheticSpec::n_classes));
    k.push_back(synthetic_key("signal_columns", &SyntheticSpec::signal_columns));
    k.push_back(synthetic_key("signal_density", &SyntheticSpec::signal_density));
    k.push_back(synthetic_key("background_density", &SyntheticSpec::background_density));
    k.push_back(synthetic_key("value_min", &SyntheticSpec::value_min));
    k.push_back(synthetic_key("value_max", &SyntheticSpec::value_max));
    k.push_back({"synthetic.separability",
                 [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                   if (!v.empty() && (std::isalpha(static_cast<unsigned char>(v.front())))) {
                     c.synthetic.separability = separability_preset(v);
                   } else {
                     c.synthetic.separability = parse_number<double>(key, v);
                   }
                 },
                 [](const ExperimentConfig& c) { return fmt(c.synthetic.separability); }});
    k.push_back({"normalize",
                 [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                   c.normalize = parse_flag(key, v);
                 },
                 [](const ExperimentConfig& c) { return std::string(c.normalize ? "true" : "false"); }});
    k.push_back({"normalize.mode",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   if (v == "minmax") {
                     c.normalization = NormalizationMode::MinMaxSymmetric;
                   } else if (v == "scale") {
                     c.normalization = NormalizationMode::ScaleOnly;
                   } else {
                     throw ConfigError("normalize.mode: expected minmax or scale");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.normalization == NormalizationMode::ScaleOnly ? "scale"
                                                                                      : "minmax");
                 }});
    k.push_back(number_key("svd.k", &ExperimentConfig::svd_k));
    k.push_back({"split.validation_fraction",
                 [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                   c.split.validation_fraction = parse_number<double>(key, v);
                 },
                 [](const ExperimentConfig& c) { return fmt(c.split.validation_fraction); }});
    k.push_back({"split.stratified",
                 [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                   c.split.stratified = parse_flag(key, v);
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.split.stratified ? "true" : "false");
                 }});
    k.push_back(number_key("poison.feature_rate", &ExperimentConfig::feature_rate));
    k.push_back(number_key("poison.label_rate", &ExperimentConfig::label_rate));
    k.push_back(roster_key("learners", &ExperimentConfig::roster));
    k.push_back({"stages",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.run_base_grid = c.run_best_of = c.run_all_models = c.run_soft_vote = false;
                   for (const auto& s : split_list(v)) {
                     if (s == "base_grid") {
                       c.run_base_grid = true;
                     } else if (s == "best_of") {
                       c.run_best_of = true;
                     } else if (s == "all_models") {
                       c.run_all_models = true;
                     } else if (s == "soft_vote") {
                       c.run_soft_vote = true;
                     } else {
                       throw ConfigError("stages: unknown stage '" + s + "'");
                     }
                   }
                 },
                 [](const ExperimentConfig& c) {
                   const bool on[] = {c.run_base_grid, c.run_best_of, c.run_all_models,
                                      c.run_soft_vote};
                   std::string out;
                   for (std::size_t i = 0; i < 4; ++i)
                     if (on[i]) out += (out.empty() ? "" : ",") + std::string(kStageNames[i]);
                   return out;
                 }});
    k.push_back({"stack.modes",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.stack_modes.clear();
                   for (const auto& m : split_list(v)) c.stack_modes.push_back(parse_stack_mode(m));
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (auto m : c.stack_modes)
                     out += (out.empty() ? "" : ",") + std::string(to_string(m));
                   return out;
                 }});
    k.push_back(number_key("stack.folds", &ExperimentConfig::folds));
    k.push_back({"stack.encoding",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.encoding = parse_stack_encoding(v);
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.encoding)); }});
    k.push_back(roster_key("stack.best_of_level2", &ExperimentConfig::best_of_level2));
    k.push_back(roster_key("stack.all_models_level2", &ExperimentConfig::all_models_level2));
    k.push_back({"soft_vote.level2",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.soft_vote_level2 = parse_learner_kind(v);
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.soft_vote_level2)); }});
    k.push_back(number_key("repeats", &ExperimentConfig::repeats));
    k.push_back({"output_dir",
                 [](ExperimentConfig& c, std::string_view, std::string_view v) { c.output_dir = v; },
                 [](const ExperimentConfig& c) { return c.output_dir; }});
    return k;
  }();
  return table;
}

bool has_duplicates(std::vector<LearnerKind> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace

double separability_preset(std::string_view name) {
  if (name == "low") return 0.6;
  if (name == "mid") return 0.8;
  if (name == "high") return 1.0;
  throw ConfigError("unknown separability level '" + std::string(name) + "'");
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  constexpr std::string_view learner_prefix = "learner.";
  if (key.starts_with(learner_prefix)) {
    const auto rest = key.substr(learner_prefix.size());
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos)
      throw ConfigError(std::string(key) + ": expected learner.<kind>.<name>");
    const auto kind = parse_learner_kind(rest.substr(0, dot));
    const std::string name(rest.substr(dot + 1));
    // Probe the override so a bad name or value fails at parse time.
    auto probe = LearnerSpec::defaults(kind);
    set_hyperparameter(probe, name, value);
    auto& list = cfg.overrides;
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](const auto& o) { return o.kind == kind && o.name == name; }),
               list.end());
    list.push_back({kind, name, std::string(value)});
    return;
  }
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? text.npos : end - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto content = trim(line);
    if (!content.empty()) {
      const auto eq = content.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
      try {
        set_config_value(cfg, trim(content.substr(0, eq)), trim(content.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
  // Overrides in canonical learner order, then by name.
  auto sorted = overrides;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.kind, a.name) < std::tie(b.kind, b.name);
  });
  for (const auto& o : sorted)
    out += "learner." + std::string(to_string(o.kind)) + "." + o.name + " = " + o.value + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  if (!(run_base_grid || run_best_of || run_all_models || run_soft_vote))
    throw ConfigError("no experiment stage enabled");
  if (source != SourceKind::Synthetic && source_path.empty())
    throw ConfigError("source.path is required for file sources");
  if (source == SourceKind::Synthetic && svd_k > synthetic.n_features)
    throw ConfigError("svd.k " + std::to_string(svd_k) + " exceeds synthetic.n_features " +
                      std::to_string(synthetic.n_features));
  if (roster.empty()) throw ConfigError("learner roster is empty");
  if (has_duplicates(roster)) throw ConfigError("learner roster lists a learner twice");
  if (!(feature_rate > 0.0 && feature_rate < 1.0) || !(label_rate > 0.0 && label_rate < 1.0))
    throw ConfigError("poisoning rates must lie in (0, 1)");
  if (!(split.validation_fraction > 0.0 && split.validation_fraction < 1.0))
    throw ConfigError("split.validation_fraction must lie in (0, 1)");
  if (repeats == 0) throw ConfigError("repeats must be at least 1");
  const bool stacking = run_best_of || run_all_models || run_soft_vote;
  if (stacking && stack_modes.empty()) throw ConfigError("stack.modes is empty");
  if (stacking && folds < 2) throw ConfigError("stack.folds must be at least 2");
  if (run_best_of && best_of_level2.empty()) throw ConfigError("stack.best_of_level2 is empty");
  if (run_all_models && all_models_level2.empty())
    throw ConfigError("stack.all_models_level2 is empty");
  if (has_duplicates(best_of_level2) || has_duplicates(all_models_level2))
    throw ConfigError("a level-2 roster lists a learner twice");
  std::set<std::string> modes;
  for (auto m : stack_modes)
    if (!modes.insert(std::string(to_string(m))).second)
      throw ConfigError("stack.modes lists a mode twice");
  for (const auto& o : overrides) harness_learner(*this, o.kind);
}

LearnerSpec harness_learner(const ExperimentConfig& cfg, LearnerKind kind, std::size_t repeat) {
  const std::string label = "learner-" + std::string(to_string(kind));
  auto spec = LearnerSpec::defaults(kind, derive_seed(cfg.seed, label, repeat));
  for (const auto& o : cfg.overrides)
    if (o.kind == kind) set_hyperparameter(spec, o.name, o.value);
  spec.validate();
  return spec;
}

}  // namespace poisonstack
