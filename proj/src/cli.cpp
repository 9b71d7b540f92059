// SPDX-License-Identifier: Apache-2.0
#include "megc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "megc/analysis.hpp"
#include "megc/checkpoint.hpp"
#include "megc/error.hpp"
#include "megc/gradcheck.hpp"
#include "megc/infer.hpp"
#include "megc/io.hpp"
#include "megc/metrics.hpp"
#include "megc/model.hpp"
#include "megc/pipeline.hpp"
#include "megc/rng.hpp"
#include "megc/signal.hpp"
#include "megc/train.hpp"

namespace megc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::Dataset;

struct Failure : std::runtime_error {
  int code;
  Failure(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

[[noreturn]] void usage(const std::string& m) { throw Failure(kExitUsage, m); }

// ---------------------------------------------------------------------------
// Files

json read_json(const fs::path& p) {
  std::string text;
  try {
    text = io::read_file(p);
  } catch (const IoError& e) {
    usage(e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    usage(p.string() + ": " + e.what());
  }
}

Dataset read_dataset(const fs::path& p) {
  if (!fs::is_regular_file(p)) usage("cannot read dataset '" + p.string() + "'");
  try {
    return pipeline::load_dataset(p);
  } catch (const IoError& e) {
    usage(e.what());
  } catch (const FormatError& e) {
    usage(p.string() + ": " + e.what());
  }
}

nn::LoadedCheckpoint read_checkpoint(const fs::path& p) {
  if (!fs::is_regular_file(p)) usage("cannot read checkpoint '" + p.string() + "'");
  try {
    return nn::load_checkpoint(p);
  } catch (const IoError& e) {
    usage(e.what());
  } catch (const FormatError& e) {
    usage(p.string() + ": " + e.what());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure(kExitIo, "cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_output(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) make_dir(p.parent_path());
  try {
    io::write_file_atomic(p, bytes);
  } catch (const IoError& e) {
    throw Failure(kExitIo, e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_output(p, j.dump(2) + "\n"); }

fs::path resolve_against(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
}

// ---------------------------------------------------------------------------
// Seeds

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) | rd();
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t value, std::ostream& out) {
  if (opt->count() > 0) return value;
  const auto s = entropy_seed();
  out << "seed: " << s << " (drawn from entropy; pass --seed " << s << " to replay)\n";
  return s;
}

std::vector<double> parse_doubles(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      usage(std::string("invalid ") + what + " '" + item + "'");
    }
  }
  if (out.empty()) usage(std::string("empty ") + what + " list");
  return out;
}

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tasks and run configuration

enum class TaskKind { phoneme, speech, feature };

struct Task {
  TaskKind kind = TaskKind::phoneme;
  std::string feature;

  std::string str() const {
    switch (kind) {
      case TaskKind::phoneme: return "phoneme";
      case TaskKind::speech: return "speech";
      case TaskKind::feature: return "feature:" + feature;
    }
    return "";
  }
};

Task parse_task(const std::string& s) {
  if (s == "phoneme") return {TaskKind::phoneme, ""};
  if (s == "speech") return {TaskKind::speech, ""};
  if (s.rfind("feature:", 0) == 0 && s.size() > 8) {
    Task t{TaskKind::feature, s.substr(8)};
    const auto names = pipeline::feature_names();
    if (std::find(names.begin(), names.end(), t.feature) == names.end()) {
      std::string known;
      for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
      usage("unknown feature '" + t.feature + "' (known: " + known + ")");
    }
    return t;
  }
  usage("unknown task '" + s + "' (expected phoneme, speech or feature:<name>)");
}

struct RunConfig {
  Task task;
  std::string preset = "desk";
  std::optional<fs::path> train, validation, test, feature_map;
  fs::path output = "megc_run";
  std::vector<std::uint64_t> seeds;
  json model = json::object();
  json train_overrides = json::object();
  json loss = json::object();
  std::size_t eval_stride = 1;
  std::size_t smooth_min_run = 60;
  bool strict = false;
  bool timing = false;
};

/// Reads the run document; paths are relative to its directory.
void apply_config_file(RunConfig& rc, const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) usage(path.string() + ": run config must be a JSON object");
  const fs::path base = path.parent_path();
  const auto field = [&](const char* key) -> const json* { return doc.contains(key) ? &doc.at(key) : nullptr; };
  try {
    if (auto* v = field("task")) rc.task = parse_task(v->get<std::string>());
    if (auto* v = field("preset")) rc.preset = v->get<std::string>();
    if (auto* v = field("data")) {
      if (v->contains("train")) rc.train = resolve_against(base, v->at("train").get<std::string>());
      if (v->contains("validation")) rc.validation = resolve_against(base, v->at("validation").get<std::string>());
      if (v->contains("test")) rc.test = resolve_against(base, v->at("test").get<std::string>());
    }
    if (auto* v = field("feature_map")) rc.feature_map = resolve_against(base, v->get<std::string>());
    if (auto* v = field("output_dir")) rc.output = resolve_against(base, v->get<std::string>());
    if (auto* v = field("seeds")) rc.seeds = v->get<std::vector<std::uint64_t>>();
    if (auto* v = field("model")) rc.model.update(*v);
    if (auto* v = field("train")) rc.train_overrides.update(*v);
    if (auto* v = field("loss")) rc.loss.update(*v);
    if (auto* v = field("eval")) {
      rc.eval_stride = v->value("stride", rc.eval_stride);
      rc.smooth_min_run = v->value("smooth_min_run", rc.smooth_min_run);
    }
  } catch (const json::exception& e) {
    usage(path.string() + ": " + e.what());
  }
}

nn::ModelConfig preset_model(const Task& task, const std::string& preset) {
  const bool paper = preset == "paper";
  switch (task.kind) {
    case TaskKind::speech: return paper ? nn::ModelConfig::speech_paper() : nn::ModelConfig::speech_desk();
    case TaskKind::phoneme: return paper ? nn::ModelConfig::phoneme_paper() : nn::ModelConfig::phoneme_desk();
    case TaskKind::feature: {
      auto c = paper ? nn::ModelConfig::phoneme_paper() : nn::ModelConfig::phoneme_desk();
      c.head = nn::HeadKind::single_logit;
      c.n_classes = 2;
      return c;
    }
  }
  return {};
}

train::TrainConfig preset_train(const Task& task, const std::string& preset, std::size_t window) {
  train::TrainConfig c;
  if (preset == "desk") {
    c.learning_rate = 1e-3;
    c.batch_size = 32;
    c.max_epochs = 20;
    c.patience = 5;
  } else if (task.kind != TaskKind::speech) {
    c.group_size = 100;
  }
  if (task.kind == TaskKind::speech) {
    signal::AugmentConfig a;
    // Mask widths are set for 2.5 s windows; shorter windows get proportionally narrower masks.
    a.time_mask_max_width = static_cast<int>(std::lround(180.0 * static_cast<double>(window) / 625.0));
    c.augment = a;
  }
  return c;
}

json preset_loss(const Task& task) {
  switch (task.kind) {
    case TaskKind::phoneme: return {{"label_smoothing", 0.0}, {"class_weights", "auto"}};
    case TaskKind::feature: return {{"label_smoothing", 0.1}, {"positive_weight", "auto"}};
    case TaskKind::speech: return {{"label_smoothing", 0.1}, {"positive_weight", "none"}};
  }
  return json::object();
}

/// Everything a training run needs once the datasets are loaded.
struct Resolved {
  RunConfig rc;
  nn::ModelConfig model;
  train::TrainConfig train;
  json loss_spec;
  Dataset train_ds, val_ds;
  std::optional<Dataset> test_ds;
  std::optional<pipeline::FeatureMap> feature_map;
};

pipeline::FeatureMap load_feature_map(const RunConfig& rc, const Dataset& ds) {
  if (rc.feature_map) {
    const auto maps = pipeline::feature_maps_from_json(read_json(*rc.feature_map), ds.class_names);
    for (const auto& m : maps) {
      if (m.name == rc.task.feature) return m;
    }
    usage(rc.feature_map->string() + ": no feature named '" + rc.task.feature + "'");
  }
  const auto symbols = pipeline::default_feature_symbols(rc.task.feature);
  return pipeline::make_feature_map(rc.task.feature, symbols, ds.class_names);
}

train::LossConfig resolve_loss(const json& spec, const Task& task, const Dataset& train_ds, std::size_t window,
                               std::size_t stride) {
  train::LossConfig c;
  c.kind = task.kind == TaskKind::phoneme ? train::LossKind::weighted_cross_entropy
                                          : train::LossKind::bce_single_logit;
  try {
    c.label_smoothing = spec.value("label_smoothing", 0.0);
    if (spec.contains("class_weights") && task.kind == TaskKind::phoneme) {
      const auto& w = spec.at("class_weights");
      if (w.is_string() && w.get<std::string>() == "auto") {
        if (train_ds.size() > 0) c.class_weights = pipeline::compute_class_weights(train_ds.class_counts());
      } else if (w.is_array()) {
        c.class_weights = pipeline::ClassWeights{w.get<std::vector<double>>()};
      } else if (!(w.is_string() && w.get<std::string>() == "none") && !w.is_null()) {
        usage("loss.class_weights must be \"auto\", \"none\" or a list");
      }
    }
    if (spec.contains("positive_weight") && task.kind != TaskKind::phoneme) {
      const auto& w = spec.at("positive_weight");
      if (w.is_string() && w.get<std::string>() == "auto") {
        std::vector<int> labels = train_ds.labels;
        if (task.kind == TaskKind::speech && train_ds.size() > 0) {
          labels = train::record_windows(pipeline::concatenate(train_ds), window, stride, pipeline::Split::train).labels;
        }
        const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
        if (pos > 0 && pos < labels.size()) c.positive_weight = pipeline::positive_class_weight(pos, labels.size() - pos);
      } else if (w.is_number()) {
        c.positive_weight = w.get<double>();
      } else if (!(w.is_string() && w.get<std::string>() == "none") && !w.is_null()) {
        usage("loss.positive_weight must be \"auto\", \"none\" or a number");
      }
    }
  } catch (const json::exception& e) {
    usage(std::string("loss config: ") + e.what());
  }
  if (c.class_weights && train_ds.size() > 0 && c.class_weights->weights.size() != train_ds.n_classes()) {
    usage("loss.class_weights has " + std::to_string(c.class_weights->weights.size()) + " entries for " +
          std::to_string(train_ds.n_classes()) + " classes");
  }
  c.validate();
  return c;
}

/// Model/train configs from preset, file and flags, then shapes adopted from
/// the training data where not set explicitly.
void resolve_configs(Resolved& r, const json& model_flags, const json& train_flags) {
  const auto& rc = r.rc;
  if (rc.preset != "desk" && rc.preset != "paper") usage("unknown preset '" + rc.preset + "' (desk or paper)");
  json model_over = rc.model;
  model_over.update(model_flags);
  r.model = preset_model(rc.task, rc.preset);
  const Dataset* shape = r.train_ds.size() > 0 ? &r.train_ds : nullptr;
  if (shape) {
    if (!model_over.contains("in_channels")) r.model.in_channels = shape->channels();
    if (rc.task.kind == TaskKind::phoneme && !model_over.contains("n_classes")) r.model.n_classes = shape->n_classes();
    if (rc.task.kind != TaskKind::speech && !model_over.contains("window_samples")) {
      r.model.window_samples = shape->samples();
    }
  }
  try {
    nn::from_json(model_over, r.model);
  } catch (const json::exception& e) {
    usage(std::string("model config: ") + e.what());
  }
  r.model.validate();
  if (rc.task.kind == TaskKind::phoneme && r.model.head != nn::HeadKind::multiclass) {
    usage("task phoneme needs a multiclass head");
  }
  if (rc.task.kind != TaskKind::phoneme && r.model.head != nn::HeadKind::single_logit) {
    usage("task " + rc.task.str() + " needs a single-logit head");
  }
  json train_over = rc.train_overrides;
  train_over.update(train_flags);
  r.train = train::train_config_from_json(train_over, preset_train(rc.task, rc.preset, r.model.window_samples));
  r.train.validate();
  if (r.train.augment) r.train.augment->validate(r.model.window_samples, shape ? shape->sample_rate_hz() : 250.0);
  r.loss_spec = preset_loss(rc.task);
  r.loss_spec.update(rc.loss);
}

void check_shape(const Resolved& r, const Dataset& ds, const std::string& what) {
  if (ds.size() == 0) usage(what + " dataset is empty");
  if (ds.channels() != r.model.in_channels) {
    usage("model expects " + std::to_string(r.model.in_channels) + " channels but the " + what + " dataset has " +
          std::to_string(ds.channels()));
  }
  if (r.rc.task.kind == TaskKind::speech) {
    if (ds.n_classes() != 2) usage(what + " dataset is not a speech/silence dataset");
    return;
  }
  if (ds.samples() != r.model.window_samples) {
    usage("model expects " + std::to_string(r.model.window_samples) + "-sample windows but the " + what +
          " dataset has " + std::to_string(ds.samples()));
  }
  if (r.rc.task.kind == TaskKind::phoneme && ds.n_classes() != r.model.n_classes) {
    usage("model has " + std::to_string(r.model.n_classes) + " classes but the " + what + " dataset has " +
          std::to_string(ds.n_classes()));
  }
}

Dataset prepare(const Resolved& r, Dataset ds) {
  if (r.rc.task.kind == TaskKind::feature) return pipeline::map_to_feature(ds, *r.feature_map);
  return ds;
}

Resolved load_run(const RunConfig& rc, const json& model_flags, const json& train_flags, bool need_data) {
  Resolved r;
  r.rc = rc;
  if (need_data) {
    if (!rc.train) usage("no training dataset (set data.train or --train)");
    if (!rc.validation) usage("no validation dataset (set data.validation or --val)");
  }
  if (rc.train) r.train_ds = read_dataset(*rc.train);
  if (rc.validation) r.val_ds = read_dataset(*rc.validation);
  if (rc.test) r.test_ds = read_dataset(*rc.test);
  resolve_configs(r, model_flags, train_flags);
  if (rc.task.kind == TaskKind::feature && r.train_ds.size() > 0) {
    r.feature_map = load_feature_map(rc, r.train_ds);
    if (r.feature_map->positive.empty()) usage("feature '" + rc.task.feature + "' matches no class of the dataset");
    if (r.feature_map->positive.size() == r.train_ds.n_classes()) {
      usage("feature '" + rc.task.feature + "' matches every class of the dataset");
    }
  }
  if (r.train_ds.size() > 0) check_shape(r, r.train_ds, "training");
  if (r.val_ds.size() > 0) check_shape(r, r.val_ds, "validation");
  if (r.test_ds) check_shape(r, *r.test_ds, "test");
  if (r.train_ds.size() > 0) {
    if (r.train_ds.class_names != r.val_ds.class_names) usage("training and validation class names differ");
    r.train_ds = prepare(r, std::move(r.train_ds));
    r.val_ds = prepare(r, std::move(r.val_ds));
    if (r.test_ds) r.test_ds = prepare(r, std::move(*r.test_ds));
  }
  return r;
}

json effective_json(const Resolved& r, const train::LossConfig* loss) {
  json j;
  j["task"] = r.rc.task.str();
  j["preset"] = r.rc.preset;
  json data = json::object();
  if (r.rc.train) data["train"] = r.rc.train->string();
  if (r.rc.validation) data["validation"] = r.rc.validation->string();
  if (r.rc.test) data["test"] = r.rc.test->string();
  j["data"] = data;
  j["seeds"] = r.rc.seeds;
  j["model"] = r.model;
  j["train"] = train::to_json(r.train);
  j["loss"] = loss ? train::to_json(*loss) : r.loss_spec;
  j["eval"] = {{"stride", r.rc.eval_stride}, {"smooth_min_run", r.rc.smooth_min_run}};
  if (r.feature_map) {
    json ids = r.feature_map->positive;
    j["feature_map"] = {{"name", r.feature_map->name}, {"positive_class_ids", ids}};
  }
  return j;
}

std::shared_ptr<const infer::WindowClassifier> classifier_of(const nn::ConformerModel& m) {
  return std::make_shared<infer::ModelClassifier>(std::make_shared<const nn::ConformerModel>(m.clone()));
}

eval::MetricReport window_report(const infer::HoldoutPrediction& p, const Dataset& ds) {
  auto report = eval::confusion_metrics(ds.labels, p.predicted, std::max<std::size_t>(ds.n_classes(), 2));
  try {
    report.auroc_macro = eval::auroc_macro(ds.labels, p.probabilities, std::max<std::size_t>(ds.n_classes(), 2));
  } catch (const UndefinedMetricError&) {
  }
  return report;
}

/// Training protocol of a resolved run; scores on the test split when present.
train::Protocol make_protocol(const Resolved& r, const Dataset& train_ds, std::optional<fs::path> out_dir) {
  train::Protocol p;
  p.model = r.model;
  p.train = r.train;
  p.loss = resolve_loss(r.loss_spec, r.rc.task, train_ds, r.model.window_samples, r.train.train_stride);
  p.out_dir = std::move(out_dir);
  p.timing = r.rc.timing;
  const std::size_t window = r.model.window_samples;
  if (r.rc.task.kind == TaskKind::speech) {
    auto tr = std::make_shared<const pipeline::Recording>(pipeline::concatenate(train_ds));
    auto va = std::make_shared<const pipeline::Recording>(pipeline::concatenate(r.val_ds));
    const auto cfg = r.train;
    p.data = [tr, va, cfg, window](std::uint64_t seed) {
      auto c = cfg;
      c.seed = seed;
      return train::speech_fit_data(*tr, *va, window, c);
    };
    if (r.test_ds) {
      auto te = std::make_shared<const pipeline::Recording>(pipeline::concatenate(*r.test_ds));
      const std::size_t stride = r.rc.eval_stride, min_run = r.rc.smooth_min_run;
      p.test = [te, window, stride, min_run](const nn::ConformerModel& m) {
        const std::vector<std::shared_ptr<const infer::WindowClassifier>> members{classifier_of(m)};
        return infer::evaluate_speech(members, *te, window, stride, min_run).metrics;
      };
    }
  } else {
    auto tr = std::make_shared<const Dataset>(train_ds);
    auto va = std::make_shared<const Dataset>(r.val_ds);
    const auto cfg = r.train;
    p.data = [tr, va, cfg](std::uint64_t seed) {
      auto c = cfg;
      c.seed = seed;
      return train::window_fit_data(*tr, *va, c);
    };
    if (r.test_ds) {
      auto te = std::make_shared<const Dataset>(*r.test_ds);
      p.test = [te](const nn::ConformerModel& m) {
        return window_report(infer::evaluate_holdout_protocol(*classifier_of(m), *te), *te);
      };
    }
  }
  return p;
}

std::vector<std::uint64_t> resolve_seeds(const RunConfig& rc, const CLI::Option* seed_opt, std::uint64_t seed_flag,
                                         const CLI::Option* count_opt, std::size_t count, std::ostream& out) {
  if (seed_opt->count() == 0 && count_opt->count() == 0 && !rc.seeds.empty()) return rc.seeds;
  std::uint64_t base = 0;
  if (seed_opt->count() > 0) base = seed_flag;
  else if (!rc.seeds.empty()) base = rc.seeds.front();
  else base = resolve_seed(seed_opt, seed_flag, out);
  const std::size_t n = count_opt->count() > 0 ? count : (rc.seeds.empty() ? 1 : rc.seeds.size());
  if (n == 0) usage("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = base + i;
  return seeds;
}

/// Flags shared by the commands that train.
struct RunFlags {
  std::string config, task, preset, train, val, test, out, feature_map;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::size_t epochs = 0, batch_size = 0, patience = 0, group_size = 0;
  double lr = 0.0;
  bool fixed_groups = false, no_augment = false, strict = false, timing = false;
  CLI::Option *seed_opt = nullptr, *seeds_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr,
              *patience_opt = nullptr, *group_opt = nullptr, *lr_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Run configuration (JSON)");
    app->add_option("--task", task, "phoneme | speech | feature:<name>");
    app->add_option("--preset", preset, "desk (default) | paper");
    app->add_option("--train", train, "Training dataset (.megw)");
    app->add_option("--val", val, "Validation dataset (.megw)");
    app->add_option("--test", test, "Test dataset (.megw)");
    app->add_option("--out", out, "Output directory");
    app->add_option("--feature-map", feature_map, "Phonetic feature map (JSON)");
    seed_opt = app->add_option("--seed", seed, "First seed (drawn from entropy when omitted)");
    seeds_opt = app->add_option("--seeds", seeds, "Number of consecutive seeds");
    epochs_opt = app->add_option("--epochs", epochs, "Maximum epochs");
    batch_opt = app->add_option("--batch-size", batch_size, "Batch size");
    patience_opt = app->add_option("--patience", patience, "Early-stopping patience");
    lr_opt = app->add_option("--lr", lr, "Learning rate");
    group_opt = app->add_option("--group-size", group_size, "Phoneme averaging group size (0 = raw)");
    app->add_flag("--fixed-groups", fixed_groups, "Freeze the first epoch's grouping");
    app->add_flag("--no-augment", no_augment, "Disable augmentation");
    app->add_flag("--timing", timing, "Record wall time in the logs");
  }

  RunConfig run_config() const {
    RunConfig rc;
    if (!config.empty()) apply_config_file(rc, config);
    if (!task.empty()) rc.task = parse_task(task);
    if (!preset.empty()) rc.preset = preset;
    if (!train.empty()) rc.train = train;
    if (!val.empty()) rc.validation = val;
    if (!test.empty()) rc.test = test;
    if (!out.empty()) rc.output = out;
    if (!feature_map.empty()) rc.feature_map = feature_map;
    rc.strict = strict;
    rc.timing = timing;
    return rc;
  }

  json train_flags() const {
    json j = json::object();
    if (epochs_opt->count()) j["max_epochs"] = epochs;
    if (batch_opt->count()) j["batch_size"] = batch_size;
    if (patience_opt->count()) j["patience"] = patience;
    if (lr_opt->count()) j["learning_rate"] = lr;
    if (group_opt->count()) j["group_size"] = group_size;
    if (fixed_groups) j["fixed_groups"] = true;
    if (no_augment) j["augment"] = nullptr;
    return j;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string spec, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  const json doc = read_json(a.spec);
  pipeline::GeneratorSpec spec;
  try {
    spec = pipeline::generator_spec_from_json(doc);
    spec.validate();
  } catch (const FormatError& e) {
    usage(a.spec + ": " + e.what());
  } catch (const ContractError& e) {
    usage(a.spec + ": " + e.what());
  }
  const auto seed = resolve_seed(a.seed_opt, a.seed, out);
  const fs::path target(a.out);
  const bool single_file = target.extension() == ".megw";
  if (single_file && spec.splits.size() != 1) {
    usage("--out names a single file but the spec defines " + std::to_string(spec.splits.size()) + " splits");
  }
  const fs::path dir = single_file ? (target.has_parent_path() ? target.parent_path() : fs::path(".")) : target;
  make_dir(dir);

  std::vector<std::pair<fs::path, Dataset>> written;
  for (const auto& split : spec.splits) {
    Dataset ds = pipeline::synthesize_dataset(spec, split, seed);
    const fs::path path = single_file ? target : dir / (pipeline::to_string(split.split) + ".megw");
    write_output(path, pipeline::encode_dataset(ds));
    written.emplace_back(path, std::move(ds));
  }
  json echo{{"command", "gen-data"}, {"seed", seed}, {"spec", pipeline::to_json(spec)}};
  write_json(single_file ? dir / (target.stem().string() + ".config.json") : dir / "effective_config.json", echo);

  std::vector<eval::NamedDataset> named;
  for (const auto& [path, ds] : written) named.push_back({pipeline::to_string(ds.split), &ds});
  const auto rms = eval::rms_split_analysis(named, 20);
  for (std::size_t i = 0; i < written.size(); ++i) {
    const auto& [path, ds] = written[i];
    std::string counts;
    for (auto c : ds.class_counts()) counts += (counts.empty() ? "" : "/") + std::to_string(c);
    out << pipeline::to_string(ds.split) << ": " << path.string() << "  windows=" << ds.size()
        << "  counts=" << counts;
    for (const auto& s : rms.splits) {
      if (s.name == pipeline::to_string(ds.split)) {
        out << "  rms_mean=" << fmt(s.mean) << "  rms_std=" << fmt(s.std);
      }
    }
    out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunFlags& f, bool dry_run, std::ostream& out, std::ostream& err) {
  RunConfig rc = f.run_config();
  rc.seeds = resolve_seeds(rc, f.seed_opt, f.seed, f.seeds_opt, f.seeds, out);
  const json train_flags = f.train_flags();
  if (dry_run) {
    const Resolved r = load_run(rc, json::object(), train_flags, false);
    std::optional<train::LossConfig> loss;
    if (r.train_ds.size() > 0) {
      loss = resolve_loss(r.loss_spec, rc.task, r.train_ds, r.model.window_samples, r.train.train_stride);
    }
    const auto model = nn::ConformerModel::init(r.model, rc.seeds.front());
    out << effective_json(r, loss ? &*loss : nullptr).dump(2) << "\n";
    out << "parameters: " << model.parameter_count() << "\n";
    return kExitOk;
  }
  const Resolved r = load_run(rc, json::object(), train_flags, true);
  make_dir(rc.output);
  const auto protocol = make_protocol(r, r.train_ds, rc.output);
  write_json(rc.output / "effective_config.json", effective_json(r, &protocol.loss));

  const auto runs = train::multi_seed(protocol, rc.seeds);
  std::size_t failed = 0;
  for (const auto& run : runs) {
    if (!run.ok) {
      ++failed;
      err << "seed " << run.seed << " failed: " << run.error << "\n";
      continue;
    }
    out << "seed " << run.seed << ": best_epoch=" << run.best_epoch << "  val_f1_macro=" << fmt(run.val_f1);
    if (run.test) out << "  test_f1_macro=" << fmt(run.test->f1_macro);
    out << "\n";
  }
  if (failed == runs.size()) {
    err << "all seeds failed\n";
    return kExitCheck;
  }
  out << "best seed " << runs.front().seed << ": val_f1_macro=" << fmt(runs.front().val_f1) << "\n";
  if (failed > 0 && rc.strict) return kExitCheck;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::vector<std::string> checkpoints, ensemble;
  std::string data, task, out = "eval_report.json", predictions, feature_map;
  std::size_t averaged = 0, stride = 1, smooth_min_run = 60;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::string> paths = a.checkpoints;
  paths.insert(paths.end(), a.ensemble.begin(), a.ensemble.end());
  if (paths.empty()) usage("no checkpoint given (--checkpoint or --ensemble)");
  std::vector<std::shared_ptr<const infer::WindowClassifier>> members;
  std::optional<nn::ModelConfig> first;
  for (const auto& p : paths) {
    auto ck = read_checkpoint(p);
    if (first && (ck.model.config().output_dim() != first->output_dim() ||
                  ck.model.config().in_channels != first->in_channels)) {
      usage("checkpoint '" + p + "' does not match the other ensemble members");
    }
    if (!first) first = ck.model.config();
    members.push_back(std::make_shared<infer::ModelClassifier>(
        std::make_shared<const nn::ConformerModel>(std::move(ck.model))));
  }
  Dataset ds = read_dataset(a.data);

  Task task;
  if (!a.task.empty()) {
    task = parse_task(a.task);
  } else if (first->head == nn::HeadKind::multiclass) {
    task = {TaskKind::phoneme, ""};
  } else if (ds.class_names == std::vector<std::string>{"silence", "speech"}) {
    task = {TaskKind::speech, ""};
  } else {
    usage("cannot infer the task of a single-logit checkpoint on this dataset; pass --task");
  }
  if (task.kind == TaskKind::phoneme && first->head != nn::HeadKind::multiclass) {
    usage("phoneme evaluation needs a multiclass checkpoint");
  }
  if (task.kind != TaskKind::phoneme && first->head != nn::HeadKind::single_logit) {
    usage(task.str() + " evaluation needs a single-logit checkpoint");
  }
  if (ds.channels() != first->in_channels) {
    usage("checkpoint expects " + std::to_string(first->in_channels) + " channels but the dataset has " +
          std::to_string(ds.channels()));
  }

  json report{{"task", task.str()}, {"checkpoints", paths}, {"dataset", a.data}};
  eval::MetricReport metrics;
  std::string csv;
  if (task.kind == TaskKind::speech) {
    if (a.smooth_min_run == 0) usage("--smooth-min-run must be >= 1");
    if (a.stride == 0) usage("--stride must be >= 1");
    const auto rec = pipeline::concatenate(ds);
    const auto res = infer::evaluate_speech(members, rec, first->window_samples, a.stride, a.smooth_min_run,
                                            a.threshold);
    metrics = res.metrics;
    report["stride"] = a.stride;
    report["smooth_min_run"] = a.smooth_min_run;
    report["n_samples"] = rec.labels.size();
    report["raw_metrics"] = eval::to_json(res.raw_metrics);
    csv = infer::speech_csv(res.probabilities, res.raw, res.smoothed);
  } else {
    if (task.kind == TaskKind::feature) {
      RunConfig rc;
      rc.task = task;
      if (!a.feature_map.empty()) rc.feature_map = a.feature_map;
      ds = pipeline::map_to_feature(ds, load_feature_map(rc, ds));
    } else if (ds.n_classes() != first->n_classes) {
      usage("checkpoint has " + std::to_string(first->n_classes) + " classes but the dataset has " +
            std::to_string(ds.n_classes()));
    }
    if (a.averaged > 0) {
      const auto seed = resolve_seed(a.seed_opt, a.seed, out);
      ds = pipeline::averaged_dataset(ds, pipeline::make_grouping_plan(ds.labels, a.averaged, seed));
      report["averaged"] = {{"group_size", a.averaged}, {"seed", seed}};
      if (ds.size() == 0) usage("no class has " + std::to_string(a.averaged) + " windows to average");
    }
    infer::HoldoutPrediction pred;
    if (members.size() == 1) {
      pred = infer::evaluate_holdout_protocol(*members.front(), ds);
    } else {
      infer::Ensemble ens{members};
      pred = infer::evaluate_holdout_protocol(ens, ds);
    }
    metrics = window_report(pred, ds);
    report["n_windows"] = ds.size();
    report["ensemble"] = members.size() > 1;
    csv = infer::phoneme_csv(pred);
  }
  report["metrics"] = eval::to_json(metrics);
  write_json(a.out, report);
  if (!a.predictions.empty()) write_output(a.predictions, csv);
  out << "f1_macro=" << fmt(metrics.f1_macro) << "  balanced_accuracy=" << fmt(metrics.balanced_accuracy)
      << "  accuracy=" << fmt(metrics.accuracy);
  if (metrics.f1_pos) out << "  f1_pos=" << fmt(*metrics.f1_pos);
  if (metrics.jaccard) out << "  jaccard=" << fmt(*metrics.jaccard);
  if (metrics.auroc_macro) out << "  auroc=" << fmt(*metrics.auroc_macro);
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(nn::GradcheckOptions opt, const std::string& fault, std::ostream& out, std::ostream& err) {
  if (!fault.empty()) {
    const auto& ops = nn::gradcheck_ops();
    if (std::find(ops.begin(), ops.end(), fault) == ops.end()) usage("unknown op '" + fault + "' for --inject-fault");
    opt.inject_fault = fault;
  }
  const auto report = nn::run_gradcheck(opt);
  out << report.text();
  if (report.pass()) return kExitOk;
  std::string names;
  for (const auto& f : report.failures()) names += (names.empty() ? "" : ", ") + f;
  err << "gradcheck failed: " << names << "\n";
  return kExitCheck;
}

// ---------------------------------------------------------------------------
// analyze-rms

int cmd_analyze_rms(const std::vector<std::string>& files, std::size_t bins, const std::string& out_dir,
                    std::ostream& out) {
  if (bins == 0) usage("--bins must be >= 1");
  std::vector<Dataset> data;
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& f : files) {
    data.push_back(read_dataset(f));
    std::string name = fs::path(f).stem().string();
    if (++seen[name] > 1) name += "#" + std::to_string(seen[name]);
    names.push_back(name);
  }
  std::vector<eval::NamedDataset> named;
  for (std::size_t i = 0; i < data.size(); ++i) named.push_back({names[i], &data[i]});
  const auto rms = eval::rms_split_analysis(named, bins);
  const fs::path dir(out_dir);
  write_output(dir / "rms_histogram.csv", rms.csv());
  write_json(dir / "rms_summary.json", rms.summary());
  for (const auto& w : rms.warnings) out << "warning: " << w << "\n";
  for (const auto& s : rms.splits) {
    out << s.name << "  n=" << s.n << "  mean=" << fmt(s.mean) << "  std=" << fmt(s.std)
        << "  bimodal=" << (s.bimodal ? "true" : "false") << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate / sweep

const std::vector<std::string> kVariants{"no_weights",    "fixed_groups", "no_grouping", "no_instance_norm",
                                         "instance_norm", "no_augment",   "no_smoothing"};

/// Applies a named single-factor change to a resolved run.
void apply_variant(Resolved& r, const std::string& v) {
  if (v == "no_weights") {
    r.loss_spec["class_weights"] = "none";
    r.loss_spec["positive_weight"] = "none";
  } else if (v == "fixed_groups") {
    r.train.fixed_groups = true;
  } else if (v == "no_grouping") {
    r.train.group_size = 0;
  } else if (v == "no_instance_norm") {
    r.model.input_norm = nn::InputNorm::none;
  } else if (v == "instance_norm") {
    r.model.input_norm = nn::InputNorm::instance;
  } else if (v == "no_augment") {
    r.train.augment.reset();
  } else if (v == "no_smoothing") {
    r.loss_spec["label_smoothing"] = 0.0;
  } else {
    usage("unknown variant '" + v +
          "' (no_weights, fixed_groups, no_grouping, no_instance_norm, instance_norm, no_augment, no_smoothing)");
  }
}

/// Score of a finished run: test F1-macro when a test split exists.
double run_score(const train::SeedRun& run) { return run.test ? run.test->f1_macro : run.val_f1; }

/// Scores in seed order; failed seeds are left out.
std::vector<double> seed_scores(const std::vector<train::SeedRun>& runs, std::span<const std::uint64_t> seeds,
                                const std::string& name, std::ostream& err) {
  std::vector<double> out;
  for (auto s : seeds) {
    for (const auto& run : runs) {
      if (run.seed != s) continue;
      if (run.ok) out.push_back(run_score(run));
      else err << name << " seed " << s << " failed: " << run.error << "\n";
    }
  }
  return out;
}

void emit_ablation(const std::vector<std::pair<std::string, std::vector<double>>>& scores, const fs::path& dir,
                   std::ostream& out) {
  for (const auto& [name, s] : scores) {
    if (s.size() != scores.front().second.size()) {
      usage("inconsistent seed counts: " + scores.front().first + " has " +
            std::to_string(scores.front().second.size()) + " scores, " + name + " has " + std::to_string(s.size()));
    }
  }
  const auto table = eval::ablation_compare(scores, scores.front().first);
  write_output(dir / "ablation.txt", table.text());
  write_output(dir / "ablation.csv", table.csv());
  write_json(dir / "ablation.json", table.json());
  out << table.text();
}

struct AblateArgs {
  RunFlags run;
  std::string variants, scores;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.scores.empty()) {
    const json doc = read_json(a.scores);
    std::vector<std::pair<std::string, std::vector<double>>> scores;
    try {
      const auto baseline = doc.at("baseline").get<std::string>();
      const auto& table = doc.at("scores");
      if (!table.contains(baseline)) usage(a.scores + ": baseline '" + baseline + "' has no scores");
      scores.emplace_back(baseline, table.at(baseline).get<std::vector<double>>());
      for (const auto& [name, s] : table.items()) {
        if (name != baseline) scores.emplace_back(name, s.get<std::vector<double>>());
      }
    } catch (const json::exception& e) {
      usage(a.scores + ": " + e.what());
    }
    if (scores.size() < 2) usage(a.scores + ": need a baseline and at least one variant");
    emit_ablation(scores, a.run.out.empty() ? fs::path("ablation") : fs::path(a.run.out), out);
    return kExitOk;
  }
  const auto variants = split_names(a.variants);
  if (variants.empty()) usage("no variants given (--variants a,b,...)");
  for (const auto& v : variants) {
    if (std::find(kVariants.begin(), kVariants.end(), v) == kVariants.end()) {
      usage("unknown variant '" + v +
            "' (no_weights, fixed_groups, no_grouping, no_instance_norm, instance_norm, no_augment, no_smoothing)");
    }
  }
  RunConfig rc = a.run.run_config();
  if (rc.output == RunConfig{}.output) rc.output = "ablation";
  rc.seeds = resolve_seeds(rc, a.run.seed_opt, a.run.seed, a.run.seeds_opt, a.run.seeds, out);
  const Resolved base = load_run(rc, json::object(), a.run.train_flags(), true);
  make_dir(rc.output);

  json echo{{"command", "ablate"}, {"baseline", effective_json(base, nullptr)}, {"variants", variants}};
  write_json(rc.output / "effective_config.json", echo);

  std::vector<std::pair<std::string, std::vector<double>>> scores;
  const auto run_one = [&](const std::string& name, const Resolved& r) {
    out << "running " << name << " (" << rc.seeds.size() << " seeds)\n";
    const auto runs = train::multi_seed(make_protocol(r, r.train_ds, std::nullopt), rc.seeds);
    scores.emplace_back(name, seed_scores(runs, rc.seeds, name, err));
  };
  run_one("baseline", base);
  for (const auto& v : variants) {
    Resolved r = base;
    apply_variant(r, v);
    run_one(v, r);
  }
  for (const auto& [name, s] : scores) {
    if (s.size() != rc.seeds.size()) {
      throw Failure(kExitCheck, name + ": " + std::to_string(rc.seeds.size() - s.size()) +
                                    " seeds failed; paired comparison needs every seed");
    }
  }
  emit_ablation(scores, rc.output, out);
  return kExitOk;
}

struct SweepArgs {
  RunFlags run;
  std::string fractions = "0.1,0.25,0.5,1.0";
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const auto fractions = parse_doubles(a.fractions, "fraction");
  RunConfig rc = a.run.run_config();
  if (rc.output == RunConfig{}.output) rc.output = "sweep";
  rc.seeds = resolve_seeds(rc, a.run.seed_opt, a.run.seed, a.run.seeds_opt, a.run.seeds, out);
  const Resolved r = load_run(rc, json::object(), a.run.train_flags(), true);
  make_dir(rc.output);
  json echo{{"command", "sweep"}, {"run", effective_json(r, nullptr)}, {"fractions", fractions}};
  write_json(rc.output / "effective_config.json", echo);

  std::size_t failures = 0;
  const auto run = [&](const Dataset& subset, std::uint64_t seed) {
    const std::vector<std::uint64_t> one{seed};
    const auto runs = train::multi_seed(make_protocol(r, subset, std::nullopt), one);
    if (!runs.front().ok) {
      ++failures;
      err << "fraction subset of " << subset.size() << " windows, seed " << seed << " failed: " << runs.front().error
          << "\n";
      return 0.0;
    }
    return run_score(runs.front());
  };
  const auto curve = eval::data_size_sweep(fractions, r.train_ds, rc.seeds, run);
  write_output(rc.output / "sweep.csv", curve.csv());
  write_json(rc.output / "sweep.json", curve.json());
  for (const auto& w : curve.warnings) out << "warning: " << w << "\n";
  out << curve.csv();
  if (failures > 0) throw Failure(kExitCheck, std::to_string(failures) + " sweep runs failed; their scores are recorded as 0");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// augment-preview

struct PreviewArgs {
  std::string data, out = "augment_preview", config;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

std::string window_csv(const signal::MegWindow& w) {
  std::string s = "sample";
  for (std::size_t c = 0; c < w.channels(); ++c) s += ",ch" + std::to_string(c);
  s += "\n";
  char buf[32];
  for (std::size_t t = 0; t < w.samples(); ++t) {
    s += std::to_string(t);
    for (std::size_t c = 0; c < w.channels(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.9g", w.at(c, t));
      s += buf;
    }
    s += "\n";
  }
  return s;
}

int cmd_augment_preview(const PreviewArgs& a, std::ostream& out) {
  const Dataset ds = read_dataset(a.data);
  if (a.index >= ds.size()) {
    usage("--index " + std::to_string(a.index) + " out of range (" + std::to_string(ds.size()) + " windows)");
  }
  const auto& window = ds.windows[a.index];
  signal::AugmentConfig cfg;
  cfg.time_mask_max_width = std::min<int>(cfg.time_mask_max_width, static_cast<int>(window.samples()));
  if (!a.config.empty()) {
    try {
      cfg = train::augment_from_json(read_json(a.config), cfg);
    } catch (const json::exception& e) {
      usage(a.config + ": " + e.what());
    }
  }
  cfg.validate(window.samples(), window.sample_rate_hz());
  const auto seed = resolve_seed(a.seed_opt, a.seed, out);
  cfg.rng_seed = seed;
  auto rng = make_rng({seed});
  const auto after = signal::meg_augment(window, cfg, rng);

  const fs::path dir(a.out);
  write_output(dir / "before.csv", window_csv(window));
  write_output(dir / "after.csv", window_csv(after));
  for (const auto& band : cfg.bands) {
    const auto filter = signal::design_bandstop(band, window.sample_rate_hz(), cfg.filter_order);
    write_output(dir / ("response_" + std::string(signal::to_string(band.name)) + ".csv"), filter.response_csv());
  }
  json echo{{"command", "augment-preview"}, {"data", a.data},       {"index", a.index},
            {"seed", seed},                 {"augment", train::augment_to_json(cfg)}};
  write_json(dir / "effective_config.json", echo);
  out << "wrote " << (dir / "before.csv").string() << ", " << (dir / "after.csv").string() << " and "
      << cfg.bands.size() << " filter responses\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MEG decoding with Conformer models", "megc"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--spec", gen.spec, "Generator spec (JSON)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory, or a .megw file for a one-split spec")->required();
  gen.seed_opt = gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  RunFlags train_flags;
  bool dry_run = false;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed");
  train_flags.add(train_cmd);
  train_cmd->add_flag("--strict", train_flags.strict, "Fail when any seed fails");
  train_cmd->add_flag("--dry-run", dry_run, "Print the effective config and parameter count");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoints, "Checkpoint (.megc); repeat for an ensemble");
  eval_cmd->add_option("--ensemble", ev.ensemble, "Ensemble member checkpoints");
  eval_cmd->add_option("--data", ev.data, "Dataset (.megw)")->required();
  eval_cmd->add_option("--task", ev.task, "phoneme | speech | feature:<name> (inferred when omitted)");
  eval_cmd->add_option("--feature-map", ev.feature_map, "Phonetic feature map (JSON)");
  eval_cmd->add_option("--averaged", ev.averaged, "Average groups of this many same-class windows");
  eval_cmd->add_option("--stride", ev.stride, "Speech window stride");
  eval_cmd->add_option("--smooth-min-run", ev.smooth_min_run, "Shortest kept speech run, in samples");
  eval_cmd->add_option("--threshold", ev.threshold, "Speech probability threshold");
  eval_cmd->add_option("--out", ev.out, "Report path (JSON)");
  eval_cmd->add_option("--predictions", ev.predictions, "Prediction CSV path");
  ev.seed_opt = eval_cmd->add_option("--seed", ev.seed, "Grouping seed for --averaged");

  nn::GradcheckOptions gc;
  std::string fault;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  auto* gc_seed = gc_cmd->add_option("--seed", gc.seed, "Input seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gc_cmd->add_option("--inject-fault", fault, "Corrupt the analytic gradient of this op");

  std::vector<std::string> rms_files;
  std::size_t bins = 30;
  std::string rms_out = "rms_analysis";
  auto* rms_cmd = app.add_subcommand("analyze-rms", "Per-window RMS distributions across datasets");
  rms_cmd->add_option("datasets", rms_files, "Dataset files (.megw)")->required();
  rms_cmd->add_option("--bins", bins, "Histogram bins");
  rms_cmd->add_option("--out", rms_out, "Output directory");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Single-factor ablations against a baseline");
  ab.run.add(ab_cmd);
  ab_cmd->add_option("--variants", ab.variants, "Comma-separated variants");
  ab_cmd->add_option("--scores", ab.scores, "Tabulate precomputed scores (JSON) instead of training");

  SweepArgs sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Training-set size sweep");
  sw.run.add(sw_cmd);
  sw_cmd->add_option("--fractions", sw.fractions, "Ascending fractions in (0, 1]");

  PreviewArgs pv;
  auto* pv_cmd = app.add_subcommand("augment-preview", "Augment one window and write before/after CSVs");
  pv_cmd->add_option("--data", pv.data, "Dataset (.megw)")->required();
  pv_cmd->add_option("--index", pv.index, "Window index");
  pv_cmd->add_option("--config", pv.config, "Augmentation config (JSON)");
  pv_cmd->add_option("--out", pv.out, "Output directory");
  pv.seed_opt = pv_cmd->add_option("--seed", pv.seed, "Augmentation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(train_flags, dry_run, out, err);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*gc_cmd) {
      gc.seed = resolve_seed(gc_seed, gc.seed, out);
      return cmd_gradcheck(gc, fault, out, err);
    }
    if (*rms_cmd) return cmd_analyze_rms(rms_files, bins, rms_out, out);
    if (*ab_cmd) return cmd_ablate(ab, out, err);
    if (*sw_cmd) return cmd_sweep(sw, out, err);
    if (*pv_cmd) return cmd_augment_preview(pv, out);
  } catch (const Failure& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheck;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"megc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace megc::cli
