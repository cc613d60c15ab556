#include "poisonstack/ensembles.hpp"

#include <algorithm>
#include <json.hpp>

#include "parallel.hpp"
#include "poisonstack/binary_io.hpp"
#include "poisonstack/errors.hpp"
#include "poisonstack/rng.hpp"

namespace poisonstack {

namespace {

using json = nlohmann::ordered_json;

constexpr char kStackMagic[] = "PSSK";
constexpr std::uint8_t kStackVersion = 1;

// Spreads a model's probabilities over the global class columns 0..C-1.
ProbaMatrix to_global(const TrainedModel& model, const ProbaMatrix& local,
                      std::uint32_t n_classes) {
  ProbaMatrix out(local.n_rows(), n_classes);
  const auto& classes = model.classes();
  for (Index r = 0; r < local.n_rows(); ++r)
    for (std::size_t j = 0; j < classes.size(); ++j) {
      if (classes[j] >= n_classes)
        throw DimensionError("model class " + std::to_string(classes[j]) +
                             " outside the stack's " + std::to_string(n_classes) + " classes");
      out(r, classes[j]) = local(r, j);
    }
  return out;
}

std::vector<Label> argmax_global(const ProbaMatrix& proba) {
  std::vector<Label> out(proba.n_rows());
  for (Index r = 0; r < proba.n_rows(); ++r) {
    const auto row = proba.row(r);
    out[r] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

DenseMatrix densify(const Dataset& ds) {
  return ds.is_sparse() ? to_dense(ds.sparse()) : ds.dense();
}

void check_labels(std::span<const Label> y, std::uint32_t n_classes, Index n_rows) {
  if (y.size() != n_rows)
    throw DimensionError("label count " + std::to_string(y.size()) + " does not match " +
                         std::to_string(n_rows) + " rows");
  for (Label l : y)
    if (l >= n_classes)
      throw LabelRangeError("label " + std::to_string(l) + " outside " +
                            std::to_string(n_classes) + " classes");
}

json spec_json(const StackSpec& spec) {
  json j;
  j["level1"] = json::array();
  for (const auto& s : spec.level1) j["level1"].push_back(json::parse(spec_to_json(s)));
  j["level2"] = json::parse(spec_to_json(spec.level2));
  j["mode"] = std::string(to_string(spec.mode));
  j["folds"] = spec.folds;
  j["encoding"] = std::string(to_string(spec.encoding));
  return j;
}

StackSpec spec_from(const nlohmann::json& j) {
  StackSpec spec;
  for (const auto& s : j.at("level1")) spec.level1.push_back(spec_from_json(s.dump()));
  spec.level2 = spec_from_json(j.at("level2").dump());
  spec.mode = parse_stack_mode(j.at("mode").get<std::string>());
  spec.folds = j.at("folds").get<std::size_t>();
  spec.encoding = parse_stack_encoding(j.at("encoding").get<std::string>());
  spec.validate();
  return spec;
}

std::string sidecar(const StackedModel& model) {
  json j = spec_json(model.spec());
  j["seed"] = model.seed();
  j["n_classes"] = model.n_classes();
  j["n_features"] = model.n_features();
  return j.dump(2) + "\n";
}

}  // namespace

std::string_view to_string(StackMode mode) {
  return mode == StackMode::InSample ? "in_sample" : "out_of_fold";
}

std::string_view to_string(StackEncoding encoding) {
  switch (encoding) {
    case StackEncoding::LabelOneHot: return "label_onehot";
    case StackEncoding::RawLabels: return "raw_labels";
    case StackEncoding::ProbaConcat: return "proba_concat";
  }
  return "?";
}

StackMode parse_stack_mode(std::string_view name) {
  if (name == "in_sample") return StackMode::InSample;
  if (name == "out_of_fold") return StackMode::OutOfFold;
  throw ConfigError("unknown stack mode '" + std::string(name) + "'");
}

StackEncoding parse_stack_encoding(std::string_view name) {
  for (auto e : {StackEncoding::LabelOneHot, StackEncoding::RawLabels, StackEncoding::ProbaConcat})
    if (name == to_string(e)) return e;
  throw ConfigError("unknown stack encoding '" + std::string(name) + "'");
}

void StackSpec::validate() const {
  if (level1.empty()) throw ConfigError("stack level 1 is empty");
  if (mode == StackMode::OutOfFold && folds < 2)
    throw ConfigError("out_of_fold stacking needs at least 2 folds");
  for (const auto& s : level1) s.validate();
  level2.validate();
}

std::string StackSpec::to_json() const { return spec_json(*this).dump(); }

StackSpec StackSpec::from_json(std::string_view text) {
  try {
    return spec_from(nlohmann::json::parse(text.begin(), text.end()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed stack spec: ") + e.what());
  }
}

std::vector<LearnerSpec> canonical_order(std::vector<LearnerSpec> specs) {
  std::vector<std::pair<std::string, LearnerSpec>> keyed;
  for (auto& s : specs) keyed.emplace_back(s.describe(), std::move(s));
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<LearnerSpec> out;
  for (auto& [key, s] : keyed) out.push_back(std::move(s));
  return out;
}

std::vector<std::size_t> assign_folds(std::span<const Label> labels, std::size_t k,
                                      std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  Label max_label = 0;
  for (Label l : labels) max_label = std::max(max_label, l);
  std::vector<std::vector<std::size_t>> by_class(labels.empty() ? 0 : max_label + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> fold(labels.size());
  std::size_t dealt = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < k)
      throw StratifyError("class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                          " samples, fewer than " + std::to_string(k) + " folds");
    rng.shuffle(rows);
    for (std::size_t r : rows) fold[r] = dealt++ % k;
  }
  return fold;
}

Level1Output fit_level1(const StackSpec& spec, const DenseMatrix& x, std::span<const Label> y,
                        std::uint32_t n_classes, std::uint64_t seed,
                        std::span<const std::pair<LearnerSpec, TrainedModel>> prefit) {
  spec.validate();
  check_labels(y, n_classes, x.n_rows());
  if (x.n_rows() == 0) throw DimensionError("stack training set is empty");

  Level1Output out;
  out.specs = canonical_order(spec.level1);
  const std::size_t m = out.specs.size();

  std::vector<std::optional<TrainedModel>> full(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto key = out.specs[i].describe();
    for (const auto& [s, model] : prefit)
      if (s.describe() == key) {
        if (model.n_features() != x.n_cols())
          throw DimensionError("prefit model width does not match the training set");
        full[i] = model;
        break;
      }
  }

  out.train_labels.assign(m, std::vector<Label>(x.n_rows()));
  out.train_proba.assign(m, ProbaMatrix(x.n_rows(), n_classes));

  if (spec.mode == StackMode::InSample) {
    detail::parallel_for(m, [&](std::size_t i) {
      if (!full[i]) full[i] = fit(out.specs[i], x, y);
    });
  } else {
    const auto folds = assign_folds(y, spec.folds, derive_seed(seed, "folds"));
    const std::size_t k = spec.folds;
    std::vector<std::vector<std::size_t>> held(k), kept(k);
    for (std::size_t r = 0; r < folds.size(); ++r)
      for (std::size_t f = 0; f < k; ++f) (folds[r] == f ? held[f] : kept[f]).push_back(r);

    // Jobs 0..m·k-1 are fold fits, the rest full refits.
    detail::parallel_for(m * k + m, [&](std::size_t job) {
      if (job >= m * k) {
        const std::size_t i = job - m * k;
        if (!full[i]) full[i] = fit(out.specs[i], x, y);
        return;
      }
      const std::size_t i = job / k, f = job % k;
      std::vector<Label> yk;
      for (std::size_t r : kept[f]) yk.push_back(y[r]);
      const auto model = fit(out.specs[i], select_rows(x, kept[f]), yk);
      const auto xh = select_rows(x, held[f]);
      const auto proba = to_global(model, predict_proba(model, xh), n_classes);
      const auto labels = argmax_global(proba);
      for (std::size_t j = 0; j < held[f].size(); ++j) {
        const std::size_t r = held[f][j];
        out.train_labels[i][r] = labels[j];
        for (Index c = 0; c < n_classes; ++c) out.train_proba[i](r, c) = proba(j, c);
      }
    });
  }

  for (std::size_t i = 0; i < m; ++i) out.models.push_back(*full[i]);
  if (spec.mode == StackMode::InSample) {
    detail::parallel_for(m, [&](std::size_t i) {
      out.train_proba[i] = to_global(out.models[i], predict_proba(out.models[i], x), n_classes);
      out.train_labels[i] = argmax_global(out.train_proba[i]);
    });
  }
  return out;
}

DenseMatrix encode_level1(StackEncoding encoding, std::span<const std::vector<Label>> labels,
                          std::span<const ProbaMatrix> proba, std::uint32_t n_classes) {
  const std::size_t m = labels.size();
  if (m == 0) throw ConfigError("no level-1 predictions to encode");
  const Index n = labels.front().size();
  const Index width = encoding == StackEncoding::RawLabels ? m : m * n_classes;
  DenseMatrix out(n, width);
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i].size() != n) throw DimensionError("level-1 members disagree on row count");
    for (Index r = 0; r < n; ++r) {
      switch (encoding) {
        case StackEncoding::LabelOneHot:
          out(r, i * n_classes + labels[i][r]) = 1.0;
          break;
        case StackEncoding::RawLabels:
          out(r, i) = labels[i][r];
          break;
        case StackEncoding::ProbaConcat:
          if (proba.size() != m || proba[i].n_rows() != n || proba[i].n_cols() != n_classes)
            throw DimensionError("level-1 probabilities do not match the labels");
          for (Index c = 0; c < n_classes; ++c) out(r, i * n_classes + c) = proba[i](r, c);
          break;
      }
    }
  }
  return out;
}

StackedModel::StackedModel(StackSpec spec, std::vector<TrainedModel> level1, TrainedModel level2,
                           std::uint32_t n_classes, std::uint64_t seed)
    : spec_(std::move(spec)),
      level1_(std::move(level1)),
      level2_(std::move(level2)),
      n_classes_(n_classes),
      seed_(seed) {
  if (level1_.empty()) throw ConfigError("stack level 1 is empty");
  if (level1_.size() != spec_.level1.size())
    throw DimensionError("stack spec and trained level 1 differ in size");
  for (const auto& m : level1_)
    if (m.n_features() != level1_.front().n_features())
      throw DimensionError("level-1 members disagree on feature width");
  const Index expected = spec_.encoding == StackEncoding::RawLabels
                             ? level1_.size()
                             : level1_.size() * static_cast<Index>(n_classes_);
  if (level2_.n_features() != expected)
    throw DimensionError("level-2 width " + std::to_string(level2_.n_features()) +
                         " does not match the level-1 encoding width " + std::to_string(expected));
}

StackedModel fit_level2(const StackSpec& spec, const Level1Output& level1,
                        std::span<const Label> y, std::uint32_t n_classes, std::uint64_t seed) {
  const auto z = encode_level1(spec.encoding, level1.train_labels, level1.train_proba, n_classes);
  auto level2 = fit(spec.level2, z, y);
  StackSpec stored = spec;
  stored.level1 = level1.specs;
  return StackedModel(std::move(stored), level1.models, std::move(level2), n_classes, seed);
}

StackedModel fit_stack(const StackSpec& spec, const DenseMatrix& x, std::span<const Label> y,
                       std::uint32_t n_classes, std::uint64_t seed) {
  const auto level1 = fit_level1(spec, x, y, n_classes, seed);
  return fit_level2(spec, level1, y, n_classes, seed);
}

StackedModel fit_stack(const StackSpec& spec, const Dataset& train, std::uint64_t seed) {
  train.validate();
  return fit_stack(spec, densify(train), train.labels, train.n_classes, seed);
}

ProbaMatrix predict_stack_proba(const StackedModel& model, const DenseMatrix& x) {
  if (x.n_cols() != model.n_features())
    throw DimensionError("stack expects " + std::to_string(model.n_features()) +
                         " features, got " + std::to_string(x.n_cols()));
  const std::uint32_t c = model.n_classes();
  if (x.n_rows() == 0) return ProbaMatrix(0, c);
  const auto& members = model.level1();
  std::vector<std::vector<Label>> labels(members.size());
  std::vector<ProbaMatrix> proba(members.size());
  detail::parallel_for(members.size(), [&](std::size_t i) {
    proba[i] = to_global(members[i], predict_proba(members[i], x), c);
    labels[i] = argmax_global(proba[i]);
  });
  const auto z = encode_level1(model.spec().encoding, labels, proba, c);
  return to_global(model.level2(), predict_proba(model.level2(), z), c);
}

std::vector<Label> predict_stack(const StackedModel& model, const DenseMatrix& x) {
  return argmax_global(predict_stack_proba(model, x));
}

std::vector<Label> soft_vote(std::span<const ProbaMatrix> member_proba) {
  if (member_proba.empty()) throw ConfigError("soft vote has no members");
  ProbaMatrix sum(member_proba.front().n_rows(), member_proba.front().n_cols());
  for (const auto& p : member_proba) {
    if (p.n_rows() != sum.n_rows() || p.n_cols() != sum.n_cols())
      throw ConfigError("soft-vote members disagree on the class set or row count");
    for (std::size_t i = 0; i < p.values().size(); ++i) sum.values()[i] += p.values()[i];
  }
  return argmax_global(sum);
}

std::vector<Label> soft_vote(const VotingEnsemble& ensemble, const DenseMatrix& x) {
  if (ensemble.members.empty()) throw ConfigError("soft vote has no members");
  for (const auto& m : ensemble.members)
    if (m.n_classes() != ensemble.n_classes)
      throw ConfigError("soft-vote member has " + std::to_string(m.n_classes()) +
                        " classes, ensemble has " + std::to_string(ensemble.n_classes));
  std::vector<ProbaMatrix> proba(ensemble.members.size());
  detail::parallel_for(proba.size(), [&](std::size_t i) {
    proba[i] = predict_stack_proba(ensemble.members[i], x);
  });
  return soft_vote(proba);
}

std::vector<std::uint8_t> encode_stack(const StackedModel& model) {
  ByteWriter w;
  w.bytes(kStackMagic);
  w.u8(kStackVersion);
  const std::string text = model.spec().to_json();
  w.u64(text.size());
  w.bytes(text);
  w.u64(model.seed());
  w.u32(model.n_classes());
  auto put = [&](const TrainedModel& m) {
    const auto bytes = encode_model(m);
    w.u64(bytes.size());
    w.array<std::uint8_t>(bytes);
  };
  w.u64(model.level1().size());
  for (const auto& m : model.level1()) put(m);
  put(model.level2());
  return w.take();
}

StackedModel decode_stack(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != kStackMagic) throw FormatError("not a stack container");
  if (const auto v = r.u8(); v != kStackVersion)
    throw FormatError("unsupported stack container version " + std::to_string(v));
  const std::uint64_t text_size = r.u64();
  if (text_size > r.remaining()) throw TruncationError("stack spec runs past end of data");
  const StackSpec spec = StackSpec::from_json(r.bytes(text_size));
  const std::uint64_t seed = r.u64();
  const std::uint32_t n_classes = r.u32();
  auto take = [&] {
    const std::uint64_t size = r.u64();
    const auto model_bytes = r.array<std::uint8_t>(size);
    return decode_model(model_bytes);
  };
  const std::uint64_t count = r.u64();
  if (count != spec.level1.size())
    throw FormatError("stack holds " + std::to_string(count) + " level-1 models, spec lists " +
                      std::to_string(spec.level1.size()));
  std::vector<TrainedModel> level1;
  for (std::uint64_t i = 0; i < count; ++i) level1.push_back(take());
  auto level2 = take();
  if (!r.at_end()) throw FormatError("trailing bytes after stack container");
  try {
    return StackedModel(spec, std::move(level1), std::move(level2), n_classes, seed);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("inconsistent stack container: ") + e.what());
  }
}

void save_stack(const StackedModel& model, const std::string& path) {
  write_file(path, encode_stack(model));
  write_text_file(path + ".json", sidecar(model));
}

StackedModel load_stack(const std::string& path) { return decode_stack(read_file(path)); }

}  // namespace poisonstack
