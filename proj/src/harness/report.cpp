#include <cstdio>
#include <filesystem>
#include <json.hpp>

#include "poisonstack/binary_io.hpp"
#include "poisonstack/digest.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/harness.hpp"

namespace poisonstack {

namespace {

std::string four(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string cell(const AccuracyTable& t, std::size_t r, std::size_t c) {
  if (t.repeats < 2) return four(t.mean[r][c]);
  return four(t.mean[r][c]) + " ± " + four(t.sd[r][c]);
}

void check_table(const AccuracyTable& t) {
  if (t.mean.size() != t.n_rows() || t.row_labels.size() != t.n_rows())
    throw DimensionError("table '" + t.name + "' is incomplete");
  for (const auto& row : t.mean) {
    if (row.size() != t.n_cols()) throw DimensionError("table '" + t.name + "' is incomplete");
    for (double v : row)
      if (!(v >= 0.0 && v <= 1.0))
        throw NumericError("table '" + t.name + "' holds an accuracy outside [0, 1]");
  }
}

std::string digest_of(const std::string& text) {
  return git_blob_digest(
      std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_report_file(const std::string& path, const std::string& text) {
  try {
    write_text_file(path, text);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("cannot write " + path + ": " + e.what());
  }
}

}  // namespace

std::string render_csv(const std::vector<AccuracyTable>& tables) {
  std::string out = "model,dataset,accuracy,seed,svd_k,mode,repeats\n";
  for (const auto& t : tables) {
    check_table(t);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      for (std::size_t c = 0; c < t.n_cols(); ++c)
        out += t.name + ":" + t.row_ids[r] + "," + t.columns[c] + "," + four(t.mean[r][c]) + "," +
               std::to_string(t.seed) + "," + std::to_string(t.svd_k) + "," + t.mode + "," +
               std::to_string(t.repeats) + "\n";
  }
  return out;
}

std::string render_markdown(const std::vector<AccuracyTable>& tables,
                            const std::vector<TopPick>& top) {
  std::string out = "# Classification accuracy on the validation set\n";
  for (const auto& t : tables) {
    check_table(t);
    out += "\n## " + t.title + "\n\n";
    out += "mode: " + t.mode + ", seed: " + std::to_string(t.seed) +
           ", svd k: " + std::to_string(t.svd_k) + ", repeats: " + std::to_string(t.repeats) +
           "\n\n";
    out += "| Model |";
    for (const auto& c : t.columns) out += " " + c + " |";
    out += "\n|---|";
    for (std::size_t c = 0; c < t.n_cols(); ++c) out += "---:|";
    out += "\n";
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      out += "| " + t.row_labels[r] + " |";
      for (std::size_t c = 0; c < t.n_cols(); ++c) out += " " + cell(t, r, c) + " |";
      out += "\n";
    }
  }
  if (!top.empty()) {
    out += "\n## Top models per training set\n\n";
    for (const auto& p : top)
      out += "- " + p.column + ": " + (p.exhausted ? "(no unselected model left)" : p.row_id) + "\n";
  }
  return out;
}

std::string emit_report(const std::vector<AccuracyTable>& tables, ReportFormat format,
                        const std::string& path, const std::vector<TopPick>& top) {
  const std::string text =
      format == ReportFormat::Csv ? render_csv(tables) : render_markdown(tables, top);
  write_report_file(path, text);
  return digest_of(text);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["library_version"] = library_version;
  j["config_digest"] = config_digest;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& [file, digest] : artifacts)
    j["artifacts"].push_back({{"file", file}, {"git_blob", digest}});
  j["timings_seconds"] = nlohmann::ordered_json::object();
  for (const auto& [name, seconds] : timings) j["timings_seconds"][name] = seconds;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  ExperimentReport report;
  const bool need_base = cfg.run_base_grid || cfg.run_best_of;
  if (need_base) {
    const auto& base = ex.base_grid();
    if (cfg.run_base_grid) report.tables.push_back(base);
    report.top = select_top_models(base);
  }
  if (cfg.run_best_of || cfg.run_all_models) {
    auto grids = ex.stack_grids(report.top);
    for (auto& t : grids.best_of) report.tables.push_back(std::move(t));
    for (auto& t : grids.all_models) report.tables.push_back(std::move(t));
  }
  if (cfg.run_soft_vote) report.tables.push_back(ex.soft_vote().table);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.output_dir + ": " + ec.message());

  const std::string config_text = ex.config().to_text();
  auto& m = report.manifest;
  m.config_digest = sha1_hex(config_text);
  const auto dir = fs::path(cfg.output_dir);
  write_report_file((dir / "config.txt").string(), config_text);
  m.artifacts.emplace_back("config.txt", digest_of(config_text));
  m.artifacts.emplace_back(
      "report.csv", emit_report(report.tables, ReportFormat::Csv, (dir / "report.csv").string()));
  m.artifacts.emplace_back("report.md", emit_report(report.tables, ReportFormat::Markdown,
                                                    (dir / "report.md").string(), report.top));
  m.timings = ex.timings();
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    const auto& d = ex.data(rep);
    m.notes.push_back("repeat " + std::to_string(rep) + " C2: " + d.feature_report.to_json());
    m.notes.push_back("repeat " + std::to_string(rep) + " C3: " + d.label_report.to_json());
    m.notes.push_back("repeat " + std::to_string(rep) +
                      " svd power iterations: " + std::to_string(d.svd_passes));
  }
  write_report_file((dir / "manifest.json").string(), m.to_json());
  return report;
}

}  // namespace poisonstack
