#include <charconv>
#include <functional>
#include <json.hpp>

#include "poisonstack/errors.hpp"
#include "poisonstack/learners.hpp"

namespace poisonstack {

namespace {

struct Field {
  std::string name;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t parse_size(std::string_view name, std::string_view text) {
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(std::string(name) + ": expected a non-negative integer, got '" +
                      std::string(text) + "'");
  return v;
}

double parse_double(std::string_view name, std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(std::string(name) + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

bool parse_bool(std::string_view name, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(std::string(name) + ": expected true or false, got '" + std::string(text) + "'");
}

Field size_field(std::string name, std::size_t& ref) {
  return {name, [&ref] { return std::to_string(ref); },
          [&ref, name](std::string_view t) { ref = parse_size(name, t); }};
}

Field double_field(std::string name, double& ref) {
  return {name, [&ref] { return format_double(ref); },
          [&ref, name](std::string_view t) { ref = parse_double(name, t); }};
}

Field bool_field(std::string name, bool& ref) {
  return {name, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, name](std::string_view t) { ref = parse_bool(name, t); }};
}

// Optional count where `unset` is spelled by a keyword ("sqrt", "all").
Field optional_field(std::string name, std::optional<std::size_t>& ref, std::string unset) {
  return {name, [&ref, unset] { return ref ? std::to_string(*ref) : unset; },
          [&ref, name, unset](std::string_view t) {
            if (t == unset) {
              ref.reset();
            } else {
              ref = parse_size(name, t);
            }
          }};
}

void tree_fields(std::vector<Field>& out, TreeParams& t) {
  out.push_back(size_field("max_depth", t.max_depth));
  out.push_back(size_field("min_samples_split", t.min_samples_split));
  out.push_back(size_field("min_samples_leaf", t.min_samples_leaf));
}

std::vector<Field> fields(LearnerSpec& spec) {
  std::vector<Field> out;
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, RandomForestParams>) {
          out.push_back(size_field("n_trees", p.n_trees));
          out.push_back(bool_field("bootstrap", p.bootstrap));
          out.push_back(optional_field("max_features", p.max_features, "sqrt"));
          tree_fields(out, p.tree);
        } else if constexpr (std::is_same_v<P, BaggingParams>) {
          out.push_back(size_field("n_estimators", p.n_estimators));
          out.push_back(bool_field("bootstrap", p.bootstrap));
          out.push_back(double_field("max_features_fraction", p.max_features_fraction));
          tree_fields(out, p.tree);
        } else if constexpr (std::is_same_v<P, TreeParams>) {
          tree_fields(out, p);
          out.push_back(optional_field("max_features", p.max_features, "all"));
        } else if constexpr (std::is_same_v<P, GradientBoostingParams>) {
          out.push_back(size_field("n_stages", p.n_stages));
          out.push_back(double_field("learning_rate", p.learning_rate));
          out.push_back(size_field("max_depth", p.max_depth));
        } else if constexpr (std::is_same_v<P, LogisticRegressionParams> ||
                             std::is_same_v<P, SvmParams>) {
          out.push_back(double_field("l2", p.l2));
          out.push_back(double_field("tol", p.tol));
          out.push_back(size_field("max_iter", p.max_iter));
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          out.push_back(size_field("hidden_units", p.hidden_units));
          out.push_back(double_field("learning_rate", p.learning_rate));
          out.push_back(double_field("beta1", p.beta1));
          out.push_back(double_field("beta2", p.beta2));
          out.push_back(double_field("epsilon", p.epsilon));
          out.push_back(size_field("batch_size", p.batch_size));
          out.push_back(size_field("max_epochs", p.max_epochs));
          out.push_back(double_field("tol", p.tol));
          out.push_back(size_field("n_iter_no_change", p.n_iter_no_change));
          out.push_back(double_field("l2", p.l2));
        } else if constexpr (std::is_same_v<P, LdaParams>) {
          out.push_back(double_field("ridge", p.ridge));
        } else if constexpr (std::is_same_v<P, QdaParams>) {
          out.push_back(double_field("ridge", p.ridge));
          out.push_back(bool_field("shared_covariance", p.shared_covariance));
        } else if constexpr (std::is_same_v<P, GaussianNbParams>) {
          out.push_back(double_field("var_smoothing", p.var_smoothing));
        }
      },
      spec.params);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> hyperparameters(const LearnerSpec& spec) {
  LearnerSpec copy = spec;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields(copy)) out.emplace_back(f.name, f.get());
  return out;
}

void set_hyperparameter(LearnerSpec& spec, std::string_view name, std::string_view value) {
  for (auto& f : fields(spec)) {
    if (f.name == name) {
      f.set(value);
      return;
    }
  }
  throw ConfigError(std::string(to_string(spec.kind)) + " has no hyperparameter '" +
                    std::string(name) + "'");
}

std::string LearnerSpec::describe() const {
  std::string out = std::string(to_string(kind)) + " seed=" + std::to_string(seed);
  for (const auto& [k, v] : hyperparameters(*this)) out += " " + k + "=" + v;
  return out;
}

std::string spec_to_json(const LearnerSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(spec.kind));
  j["seed"] = spec.seed;
  j["params"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : hyperparameters(spec)) j["params"][k] = v;
  return j.dump();
}

LearnerSpec spec_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
    auto spec = LearnerSpec::defaults(parse_learner_kind(j.at("kind").get<std::string>()),
                                      j.at("seed").get<std::uint64_t>());
    for (const auto& [k, v] : j.at("params").items()) set_hyperparameter(spec, k, v.get<std::string>());
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed learner spec: ") + e.what());
  }
}

}  // namespace poisonstack
