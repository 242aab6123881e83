#pragma once

// Experiment configuration (JSON file plus --section.key=value overrides) and
// the orchestration behind the CLI subcommands: pretrain, run, ablate and
// sweep-ratio.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stamp/common.hpp"
#include "stamp/datagen.hpp"
#include "stamp/diffnet.hpp"
#include "stamp/engine.hpp"
#include "stamp/metrics.hpp"

namespace stamp {

using Json = nlohmann::ordered_json;

struct DataSection {
  std::size_t classes = 4;
  std::size_t dim = 2;
  std::size_t source_samples = 4000;
  std::size_t validation_samples = 1000;
  std::size_t target_samples = 10000;
  std::size_t batch_size = 64;
  double severity = 5.0;
  double outlier_ratio = 0.2;
  OutlierMode outlier_mode = OutlierMode::HeldOutClass;
};

struct ModelSection {
  std::vector<std::size_t> hidden{32, 32};
  std::string checkpoint;  // empty: pretrain in-process
  std::size_t pretrain_epochs = 30;
  double pretrain_lr = 0.1;
  std::size_t pretrain_batch_size = 64;
  double min_source_accuracy = 0.95;
};

// Defaults for lr, tent_lr, horizon and entropy_factor come from the
// validation sweep in tools/stamp_tune.cpp (configs/defaults.json).
struct MethodSection {
  Method method = Method::Stamp;
  Toggles toggles;
  WeightStrategy weighting = WeightStrategy::SelfWeighted;
  double lr = 0.2;
  double tent_lr = 0.1;
  std::size_t horizon = 300;
  double rho = 0.05;
  std::size_t views = 16;
  double aug_strength = 1.0;
  double entropy_factor = 0.25;  // H_thr = factor * ln C
  double beta = 0.1;
  std::size_t capacity = 64;
  std::optional<double> delta_threshold;  // defaults to H_thr
  ForwardMode prediction_stats = ForwardMode::SourceStats;
};

struct OutputSection {
  std::string dir = "out";
  bool records = true;
  bool roc = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataSection data;
  ModelSection model;
  MethodSection method;
  OutputSection output;

  double entropy_threshold() const { return method.entropy_factor * std::log(static_cast<double>(data.classes)); }
  double delta_threshold() const { return method.delta_threshold.value_or(entropy_threshold()); }

  StreamConfig stream() const {
    StreamConfig s;
    s.classes = data.classes;
    s.dim = data.dim;
    s.samples = data.target_samples;
    s.batch_size = data.batch_size;
    s.severity = data.severity;
    s.outlier_ratio = data.outlier_ratio;
    s.outlier_mode = data.outlier_mode;
    s.seed = mix_seed(seed, 2);
    return s;
  }

  AdaptConfig adapt() const {
    AdaptConfig a;
    a.method = method.method;
    a.toggles = method.toggles;
    a.weighting = method.weighting;
    a.lr = method.lr;
    a.tent_lr = method.tent_lr;
    a.horizon = method.horizon;
    a.sam.rho = method.rho;
    a.views = method.views;
    a.aug_strength = method.aug_strength;
    a.entropy_threshold = entropy_threshold();
    a.beta = method.beta;
    a.capacity = method.capacity;
    a.seed = mix_seed(seed, 5);
    a.prediction_stats = method.prediction_stats;
    return a;
  }

  ArchSpec arch() const { return {data.dim, model.hidden, data.classes, true, 0.1, 1e-5}; }
};

// ---------------------------------------------------------------------------
// JSON <-> config

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("");
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<double>();
      } else {
        out = v.get<T>();
      }
    } catch (const std::exception&) {
      throw ConfigError(key_path(key) + ": wrong type");
    }
  }

  template <typename T, typename F>
  void get_as(const char* key, T& out, F&& convert) {
    std::string s;
    get(key, s);
    if (j_.contains(key)) {
      try {
        out = convert(s);
      } catch (const ConfigError& e) {
        throw ConfigError(key_path(key) + ": " + e.what());
      }
    }
  }

  void optional_double(const char* key, std::optional<double>& out) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    if (!j_.at(key).is_number()) throw ConfigError(key_path(key) + ": wrong type");
    out = j_.at(key).get<double>();
  }

  Reader child(const char* key) {
    seen_.push_back(key);
    static const Json empty = Json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, key_path(key));
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError(key_path(k) + ": unknown key");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace detail

/// Range checks; the message names the offending key.
inline void validate(const ExperimentConfig& c) {
  using detail::require;
  require(c.data.classes >= 2, "data.C", "must be at least 2");
  require(c.data.dim >= 2, "data.d", "must be at least 2");
  require(c.data.source_samples >= 10 * c.data.classes, "data.source_samples", "must be at least 10 per class");
  require(c.data.validation_samples >= 10 * c.data.classes, "data.validation_samples", "must be at least 10 per class");
  require(c.data.target_samples > 0, "data.target_samples", "must be positive");
  require(c.data.batch_size >= 2, "data.batch_size", "must be at least 2");
  require(c.data.target_samples % c.data.batch_size != 1, "data.target_samples",
          "leaves a single-sample trailing batch");
  require(c.data.severity >= 0.0 && c.data.severity <= 5.0, "data.severity", "must lie in [0, 5]");
  require(c.data.outlier_ratio >= 0.0 && c.data.outlier_ratio < 1.0, "data.outlier_ratio", "must lie in [0, 1)");
  require(!c.model.hidden.empty(), "model.hidden", "needs at least one layer");
  for (auto h : c.model.hidden) require(h > 0, "model.hidden", "widths must be positive");
  require(c.model.pretrain_lr > 0.0, "model.pretrain_lr", "must be positive");
  require(c.model.pretrain_batch_size >= 2, "model.pretrain_batch_size", "must be at least 2");
  require(c.model.min_source_accuracy >= 0.0 && c.model.min_source_accuracy <= 1.0, "model.min_source_accuracy",
          "must lie in [0, 1]");
  require(c.method.lr >= 0.0, "method.lr", "must be non-negative");
  require(c.method.tent_lr >= 0.0, "method.tent_lr", "must be non-negative");
  require(c.method.horizon >= 1, "method.T", "must be at least 1");
  require(c.method.rho >= 0.0, "method.rho", "must be non-negative");
  require(c.method.views >= 1, "method.K", "must be at least 1");
  require(c.method.aug_strength >= 0.0, "method.aug_strength", "must be non-negative");
  require(c.method.entropy_factor > 0.0, "method.h_thr_factor", "must be positive");
  require(c.method.beta > 0.0 && c.method.beta <= 1.0, "method.beta", "must lie in (0, 1]");
  require(c.method.capacity >= 1, "method.capacity", "must be positive");
  if (c.method.delta_threshold) require(*c.method.delta_threshold >= 0.0, "method.delta_thr", "must be non-negative");
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  detail::Reader root(j, "");
  root.get("seed", c.seed);

  auto data = root.child("data");
  data.get("C", c.data.classes);
  data.get("d", c.data.dim);
  data.get("source_samples", c.data.source_samples);
  data.get("validation_samples", c.data.validation_samples);
  data.get("target_samples", c.data.target_samples);
  data.get("batch_size", c.data.batch_size);
  data.get("severity", c.data.severity);
  data.get("outlier_ratio", c.data.outlier_ratio);
  data.get_as("outlier_mode", c.data.outlier_mode, outlier_mode_from_string);
  data.reject_unknown();

  auto model = root.child("model");
  model.get("hidden", c.model.hidden);
  model.get("checkpoint", c.model.checkpoint);
  model.get("pretrain_epochs", c.model.pretrain_epochs);
  model.get("pretrain_lr", c.model.pretrain_lr);
  model.get("pretrain_batch_size", c.model.pretrain_batch_size);
  model.get("min_source_accuracy", c.model.min_source_accuracy);
  model.reject_unknown();

  auto method = root.child("method");
  method.get_as("name", c.method.method, method_from_string);
  method.get_as("weighting", c.method.weighting, weight_strategy_from_string);
  method.get("use_memory", c.method.toggles.memory);
  method.get("use_self_weight", c.method.toggles.self_weight);
  method.get("use_sam", c.method.toggles.sam);
  method.get("use_decay", c.method.toggles.decay);
  method.get("use_augmentation", c.method.toggles.augmentation);
  method.get("use_filtering", c.method.toggles.filtering);
  method.get("lr", c.method.lr);
  method.get("tent_lr", c.method.tent_lr);
  method.get("T", c.method.horizon);
  method.get("rho", c.method.rho);
  method.get("K", c.method.views);
  method.get("aug_strength", c.method.aug_strength);
  method.get("h_thr_factor", c.method.entropy_factor);
  method.get("beta", c.method.beta);
  method.get("capacity", c.method.capacity);
  method.optional_double("delta_thr", c.method.delta_threshold);
  method.get_as("prediction_bn", c.method.prediction_stats, forward_mode_from_string);
  method.reject_unknown();

  auto output = root.child("output");
  output.get("dir", c.output.dir);
  output.get("records", c.output.records);
  output.get("roc", c.output.roc);
  output.reject_unknown();

  root.reject_unknown();
  validate(c);
  return c;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["data"] = {{"C", c.data.classes},
               {"d", c.data.dim},
               {"source_samples", c.data.source_samples},
               {"validation_samples", c.data.validation_samples},
               {"target_samples", c.data.target_samples},
               {"batch_size", c.data.batch_size},
               {"severity", c.data.severity},
               {"outlier_ratio", c.data.outlier_ratio},
               {"outlier_mode", std::string(to_string(c.data.outlier_mode))}};
  j["model"] = {{"hidden", c.model.hidden},
                {"checkpoint", c.model.checkpoint},
                {"pretrain_epochs", c.model.pretrain_epochs},
                {"pretrain_lr", c.model.pretrain_lr},
                {"pretrain_batch_size", c.model.pretrain_batch_size},
                {"min_source_accuracy", c.model.min_source_accuracy}};
  const auto& m = c.method;
  j["method"] = {{"name", std::string(to_string(m.method))},
                 {"weighting", std::string(to_string(m.weighting))},
                 {"use_memory", m.toggles.memory},
                 {"use_self_weight", m.toggles.self_weight},
                 {"use_sam", m.toggles.sam},
                 {"use_decay", m.toggles.decay},
                 {"use_augmentation", m.toggles.augmentation},
                 {"use_filtering", m.toggles.filtering},
                 {"lr", m.lr},
                 {"tent_lr", m.tent_lr},
                 {"T", m.horizon},
                 {"rho", m.rho},
                 {"K", m.views},
                 {"aug_strength", m.aug_strength},
                 {"h_thr_factor", m.entropy_factor},
                 {"beta", m.beta},
                 {"capacity", m.capacity},
                 {"delta_thr", m.delta_threshold ? Json(*m.delta_threshold) : Json(nullptr)},
                 {"prediction_bn", std::string(to_string(m.prediction_stats))}};
  j["output"] = {{"dir", c.output.dir}, {"records", c.output.records}, {"roc", c.output.roc}};
  return j;
}

/// Applies `section.key=value` overrides to a JSON document. Values are
/// parsed as JSON when possible, otherwise taken as strings.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!node->contains(key)) (*node)[key] = Json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError(path.substr(0, dot) + ": not a section");
    start = dot + 1;
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  Json j = Json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

inline ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Orchestration

struct SourceModel {
  Model model;
  double validation_accuracy = 0.0;
};

/// Source data and validation split are seeded from the experiment seed.
inline SourceModel train_source_model(const ExperimentConfig& c) {
  const Dataset train = gen_source(c.stream().geometry(), c.data.source_samples, mix_seed(c.seed, 1));
  const Dataset val = gen_source(c.stream().geometry(), c.data.validation_samples, mix_seed(c.seed, 6));
  Model m = Model::init(c.arch(), mix_seed(c.seed, 3));
  const auto labels = train.labels();
  m = pretrain(std::move(m), train.features, labels,
               {c.model.pretrain_epochs, c.model.pretrain_lr, c.model.pretrain_batch_size, mix_seed(c.seed, 4)});
  const auto val_labels = val.labels();
  const double acc = accuracy_of(m, val.features, val_labels);
  return {std::move(m), acc};
}

inline SourceModel source_validation(const ExperimentConfig& c, Model m) {
  const Dataset val = gen_source(c.stream().geometry(), c.data.validation_samples, mix_seed(c.seed, 6));
  const auto labels = val.labels();
  const double acc = accuracy_of(m, val.features, labels);
  return {std::move(m), acc};
}

/// Loads model.checkpoint when set, otherwise pretrains.
inline SourceModel obtain_source_model(const ExperimentConfig& c) {
  if (c.model.checkpoint.empty()) return train_source_model(c);
  if (!std::filesystem::exists(c.model.checkpoint))
    throw ConfigError("model.checkpoint: file not found: " + c.model.checkpoint);
  Model m = load_checkpoint(c.model.checkpoint);
  if (!(m.arch() == c.arch())) throw ConfigError("model.checkpoint: architecture does not match the config");
  return source_validation(c, std::move(m));
}

struct RunResult {
  std::vector<Batch> stream;
  std::vector<EvalRecord> records;
  MetricsSummary metrics;
  std::vector<RocPoint> roc;  // empty without outliers
};

inline RunResult run_experiment(const ExperimentConfig& c, const Model& source) {
  RunResult r;
  r.stream = gen_stream(c.stream());
  r.records = run_stream(source, c.adapt(), r.stream);
  r.metrics = summarize(r.records);
  if (r.metrics.outliers > 0) {
    std::vector<double> scores;
    const auto flags = std::make_unique<bool[]>(r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      scores.push_back(r.records[i].score);
      flags[i] = r.records[i].truth.outlier;
    }
    r.roc = roc_curve(scores, {flags.get(), r.records.size()});
  }
  return r;
}

inline std::size_t rejected_count(const ExperimentConfig& c, const RunResult& r) {
  std::size_t n = 0;
  for (const auto& rec : r.records) n += static_cast<std::size_t>(detect(rec.score, c.delta_threshold()));
  return n;
}

inline Json summary_json(const ExperimentConfig& c, const SourceModel& source, const RunResult& r) {
  Json j;
  j["method"] = std::string(to_string(c.method.method));
  j["seed"] = c.seed;
  j["source_validation_accuracy"] = source.validation_accuracy;
  j["metrics"] = to_json(r.metrics);
  j["delta_thr"] = c.delta_threshold();
  j["rejected"] = rejected_count(c, r);
  j["config"] = to_json(c);
  return j;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) { open_out(p) << text; }

inline std::string fmt(std::optional<double> v) {
  if (!v) return "";
  std::string s;
  append_double(s, *v);
  return s;
}

}  // namespace detail

inline void write_run_outputs(const ExperimentConfig& c, const SourceModel& source, const RunResult& r,
                              const std::filesystem::path& dir) {
  detail::write_text(dir / "summary.json", summary_json(c, source, r).dump(2) + "\n");
  if (c.output.records) {
    auto os = detail::open_out(dir / "records.csv");
    write_records(os, r.stream, r.records);
  }
  if (c.output.roc && !r.roc.empty()) {
    auto os = detail::open_out(dir / "roc.csv");
    write_roc(os, r.roc);
  }
}

inline void check_source_floor(const ExperimentConfig& c, const SourceModel& s) {
  if (s.validation_accuracy < c.model.min_source_accuracy)
    throw NumericalError("source model validation accuracy " + std::to_string(s.validation_accuracy) +
                         " is below model.min_source_accuracy");
}

/// Trains the source model and writes `<out>/model.ckpt`.
inline SourceModel cmd_pretrain(const ExperimentConfig& c) {
  SourceModel s = train_source_model(c);
  check_source_floor(c, s);
  const std::filesystem::path dir(c.output.dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(s.model, (dir / "model.ckpt").string());
  Json j;
  j["seed"] = c.seed;
  j["source_validation_accuracy"] = s.validation_accuracy;
  j["checkpoint"] = (dir / "model.ckpt").string();
  detail::write_text(dir / "pretrain.json", j.dump(2) + "\n");
  return s;
}

inline RunResult cmd_run(const ExperimentConfig& c) {
  const SourceModel s = obtain_source_model(c);
  RunResult r = run_experiment(c, s.model);
  write_run_outputs(c, s, r, c.output.dir);
  return r;
}

struct Arm {
  std::string name;
  std::function<void(ExperimentConfig&)> apply;
};

/// Component grid (SAM, decay, memory, self-weight), the three weighting
/// strategies, and augmentation on/off: 7 + 3 + 2 arms.
inline std::vector<Arm> ablation_arms() {
  auto grid = [](bool sam, bool decay, bool memory, bool self_weight) {
    return [=](ExperimentConfig& c) {
      c.method.method = Method::Stamp;
      c.method.toggles.sam = sam;
      c.method.toggles.decay = decay;
      c.method.toggles.memory = memory;
      c.method.toggles.filtering = memory;
      c.method.toggles.self_weight = self_weight;
    };
  };
  auto weighting = [](WeightStrategy w) {
    return [=](ExperimentConfig& c) {
      c.method.method = Method::Stamp;
      c.method.weighting = w;
    };
  };
  auto augmentation = [](bool on) {
    return [=](ExperimentConfig& c) {
      c.method.method = Method::Stamp;
      c.method.toggles.augmentation = on;
    };
  };
  return {
      {"grid-none", grid(false, false, false, false)},
      {"grid-ds", grid(false, true, false, false)},
      {"grid-sa", grid(true, false, false, false)},
      {"grid-sa-ds", grid(true, true, false, false)},
      {"grid-sa-ds-sw", grid(true, true, false, true)},
      {"grid-sa-ds-rbm", grid(true, true, true, false)},
      {"grid-full", grid(true, true, true, true)},
      {"weight-self", weighting(WeightStrategy::SelfWeighted)},
      {"weight-static", weighting(WeightStrategy::StaticWeighted)},
      {"weight-eata", weighting(WeightStrategy::EataWeighted)},
      {"augment-on", augmentation(true)},
      {"augment-off", augmentation(false)},
  };
}

struct ArmResult {
  std::string name;
  ExperimentConfig config;
  MetricsSummary metrics;
};

inline std::string comparison_csv(std::span<const ArmResult> arms) {
  std::string out = "arm,acc,auc,h_score\n";
  for (const auto& a : arms)
    out += a.name + "," + detail::fmt(a.metrics.acc) + "," + detail::fmt(a.metrics.auc) + "," +
           detail::fmt(a.metrics.h_score) + "\n";
  return out;
}

/// Runs each arm from the same source model; one failing arm does not stop
/// the others. Failures are reported on `err` and returned by name.
inline std::vector<std::string> run_arms(const ExperimentConfig& base, std::span<const Arm> arms,
                                         std::vector<ArmResult>& results, std::ostream& err) {
  const SourceModel s = obtain_source_model(base);
  const std::filesystem::path dir(base.output.dir);
  std::vector<std::string> failed;
  for (const auto& arm : arms) {
    try {
      ExperimentConfig c = base;
      arm.apply(c);
      validate(c);
      const RunResult r = run_experiment(c, s.model);
      detail::write_text(dir / arm.name / "summary.json", summary_json(c, s, r).dump(2) + "\n");
      results.push_back({arm.name, c, r.metrics});
    } catch (const std::exception& e) {
      err << "arm " << arm.name << " failed: " << e.what() << '\n';
      failed.push_back(arm.name);
    }
  }
  detail::write_text(dir / "comparison.csv", comparison_csv(results));
  return failed;
}

inline std::vector<std::string> cmd_ablate(const ExperimentConfig& c, std::vector<ArmResult>& results,
                                           std::ostream& err = std::cerr) {
  const auto arms = ablation_arms();
  return run_arms(c, arms, results, err);
}

inline const std::vector<double>& sweep_ratios() {
  static const std::vector<double> r{0.05, 0.10, 0.20, 0.33, 0.50};
  return r;
}

inline std::vector<Arm> ratio_arms() {
  std::vector<Arm> arms;
  for (double r : sweep_ratios()) {
    char name[32];
    std::snprintf(name, sizeof name, "ratio-%.2f", r);
    arms.push_back({name, [r](ExperimentConfig& c) {
                      c.method.method = Method::Stamp;
                      c.data.outlier_ratio = r;
                    }});
  }
  return arms;
}

inline std::vector<std::string> cmd_sweep_ratio(const ExperimentConfig& c, std::vector<ArmResult>& results,
                                                std::ostream& err = std::cerr) {
  const auto arms = ratio_arms();
  const auto failed = run_arms(c, arms, results, err);
  std::string out = "ratio,acc,auc,h_score\n";
  for (const auto& a : results)
    out += detail::fmt(a.config.data.outlier_ratio) + "," + detail::fmt(a.metrics.acc) + "," +
           detail::fmt(a.metrics.auc) + "," + detail::fmt(a.metrics.h_score) + "\n";
  detail::write_text(std::filesystem::path(c.output.dir) / "comparison.csv", out);
  return failed;
}

}  // namespace stamp
