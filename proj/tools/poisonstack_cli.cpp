#include <CLI11.hpp>
#include <iostream>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/decomposition.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/harness.hpp"
#include "poisonstack/ingest.hpp"
#include "poisonstack/poisoning.hpp"

using namespace poisonstack;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> repeats;
  std::vector<std::string> sets;
};

ExperimentConfig build_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (g.repeats) cfg.repeats = *g.repeats;
  return cfg;
}

// Synthetic spec file: the synthetic.* config keys, with or without the prefix.
SyntheticSpec load_synthetic_spec(const std::string& path) {
  const auto bytes = read_file(path);
  std::string text;
  std::size_t start = 0;
  const std::string raw(bytes.begin(), bytes.end());
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string::npos) end = raw.size();
    std::string line = raw.substr(start, end - start);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] != '#' && line.compare(first, 10, "synthetic.") != 0)
      line.insert(first, "synthetic.");
    text += line + "\n";
    start = end + 1;
  }
  auto cfg = parse_config(text + "svd.k = 0\n");
  return cfg.synthetic;
}

void run_stages(Globals& g, bool base, bool best_of, bool all_models, bool vote) {
  auto cfg = build_config(g);
  if (base || best_of || all_models || vote) {
    cfg.run_base_grid = base;
    cfg.run_best_of = best_of;
    cfg.run_all_models = all_models;
    cfg.run_soft_vote = vote;
  }
  cfg.validate();
  const auto report = run_experiment(cfg);
  std::cout << render_markdown(report.tables, report.top);
  std::cout << "\nwrote " << cfg.output_dir << "/report.csv, report.md, manifest.json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisoning-robust stacking workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "experiment config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--repeats", g.repeats, "independent repeats (reported as mean ± sd)");
  app.add_option("--set", g.sets, "config override key=value (repeatable)");

  std::string input, output, spec_path, scheme = "features", svd_model;
  Index k = 50;
  double rate = 0.2;

  auto* ingest = app.add_subcommand("ingest", "assemble a JSON archive into a dataset container");
  ingest->add_option("json", input, "raw JSON archive")->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--output", output, "container path")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic sparse corpus");
  synth->add_option("--spec", spec_path, "synthetic spec file")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--output", output, "container path")->required();

  auto* reduce = app.add_subcommand("reduce", "fit a truncated SVD and project a container");
  reduce->add_option("container", input, "input container")->required()->check(CLI::ExistingFile);
  reduce->add_option("-k,--dims", k, "components to keep")->required();
  reduce->add_option("-o,--output", output, "reduced container path")->required();
  reduce->add_option("--model", svd_model, "also save the fitted SVD model here");

  auto* poison = app.add_subcommand("poison", "apply a perturbation scheme to a container");
  poison->add_option("container", input, "input container")->required()->check(CLI::ExistingFile);
  poison->add_option("--scheme", scheme, "features or labels")
      ->check(CLI::IsMember({"features", "labels"}));
  poison->add_option("--rate", rate, "perturbation rate");
  poison->add_option("-o,--output", output, "poisoned container path")->required();

  auto* grid = app.add_subcommand("grid", "base-model grid over C1, C2, C3");
  auto* stack = app.add_subcommand("stack", "best-of and all-model stack grids");
  auto* vote = app.add_subcommand("vote", "soft vote over the per-set stacks");
  auto* report = app.add_subcommand("report", "every stage enabled in the config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      save_container(assemble_feature_matrix(load_raw_json(input)), output);
    } else if (*synth) {
      auto spec = load_synthetic_spec(spec_path);
      spec.seed = g.seed.value_or(spec.seed);
      save_container(make_synthetic_dataset(spec), output);
    } else if (*reduce) {
      const auto ds = load_container(input);
      const auto seed = g.seed.value_or(0);
      const auto model = std::visit([&](const auto& m) { return fit_truncated_svd(m, k, seed); },
                                    ds.features);
      ContainerContents out;
      out.dataset.features =
          std::visit([&](const auto& m) { return transform(model, m); }, ds.features);
      out.dataset.labels = ds.labels;
      out.dataset.n_classes = ds.n_classes;
      out.dataset.provenance = ds.provenance;
      out.singular_values = model.singular_values;
      write_file(output, encode_container(out));
      if (!svd_model.empty()) save_svd_model(model, svd_model);
    } else if (*poison) {
      const auto ds = load_container(input);
      const auto seed = g.seed.value_or(0);
      auto [poisoned, rep] = scheme == "features" ? perturb_features(ds, rate, seed)
                                                  : perturb_labels(ds, rate, seed);
      save_container(poisoned, output);
      std::cout << rep.to_json() << "\n";
    } else if (*grid) {
      run_stages(g, true, false, false, false);
    } else if (*stack) {
      run_stages(g, false, true, true, false);
    } else if (*vote) {
      run_stages(g, false, false, false, true);
    } else if (*report) {
      run_stages(g, false, false, false, false);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
