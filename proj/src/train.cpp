// SPDX-License-Identifier: Apache-2.0
#include "megc/train.hpp"

#include <atomic>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "megc/checkpoint.hpp"
#include "megc/error.hpp"
#include "megc/infer.hpp"
#include "megc/io.hpp"
#include "megc/rng.hpp"

namespace megc::train {

namespace {

constexpr std::uint64_t kOrderStream = 0x0dde5;
constexpr std::uint64_t kDropoutStream = 0xd209;
constexpr std::uint64_t kAugmentStream = 0xa06;
constexpr std::uint64_t kGroupStream = 0x6209;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

ScalarLoss bce_smoothed(double z, int target, double s, double w) {
  const double y = static_cast<double>(target) * (1.0 - s) + s / 2.0;
  const double sig = infer::sigmoid(z);
  ScalarLoss out;
  out.loss = w * y * softplus(-z) + (1.0 - y) * softplus(z);
  out.grad = -w * y * (1.0 - sig) + (1.0 - y) * sig;
  return out;
}

VectorLoss weighted_cross_entropy(std::span<const double> logits, int target,
                                  std::span<const double> weights, double smoothing) {
  const std::size_t C = logits.size();
  if (C == 0) throw ContractError("cross entropy: no logits");
  if (target < 0 || static_cast<std::size_t>(target) >= C) throw ContractError("cross entropy: target out of range");
  if (!weights.empty() && weights.size() != C) throw ContractError("cross entropy: weight count != class count");
  const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(target)];
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  VectorLoss out;
  out.grad.resize(C);
  const double off = smoothing / static_cast<double>(C);
  for (std::size_t k = 0; k < C; ++k) {
    const double q = (k == static_cast<std::size_t>(target) ? 1.0 - smoothing : 0.0) + off;
    const double logp = logits[k] - lse;
    out.loss -= w * q * logp;
    out.grad[k] = w * (std::exp(logp) - q);
  }
  return out;
}

void LossConfig::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw ContractError("label_smoothing must be in [0, 0.5)");
  if (kind == LossKind::bce_single_logit && class_weights) {
    throw ContractError("class_weights only apply to weighted_cross_entropy");
  }
  if (kind == LossKind::weighted_cross_entropy && positive_weight) {
    throw ContractError("positive_weight only applies to bce_single_logit");
  }
  if (positive_weight && !(*positive_weight > 0.0)) throw ContractError("positive_weight must be positive");
  if (class_weights) {
    for (double w : class_weights->weights) {
      if (!(w > 0.0)) throw ContractError("class weights must be positive");
    }
  }
}

nlohmann::json to_json(const LossConfig& c) {
  nlohmann::json j;
  j["kind"] = c.kind == LossKind::bce_single_logit ? "bce_single_logit" : "weighted_cross_entropy";
  j["label_smoothing"] = c.label_smoothing;
  j["class_weights"] = c.class_weights ? nlohmann::json(c.class_weights->weights) : nlohmann::json(nullptr);
  j["positive_weight"] = c.positive_weight ? nlohmann::json(*c.positive_weight) : nlohmann::json(nullptr);
  return j;
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig c;
  const std::string kind = j.value("kind", std::string("weighted_cross_entropy"));
  if (kind == "bce_single_logit") c.kind = LossKind::bce_single_logit;
  else if (kind == "weighted_cross_entropy") c.kind = LossKind::weighted_cross_entropy;
  else throw FormatError("loss.kind must be bce_single_logit or weighted_cross_entropy");
  c.label_smoothing = j.value("label_smoothing", 0.0);
  if (j.contains("class_weights") && !j["class_weights"].is_null()) {
    c.class_weights = pipeline::ClassWeights{j["class_weights"].get<std::vector<double>>()};
  }
  if (j.contains("positive_weight") && !j["positive_weight"].is_null()) {
    c.positive_weight = j["positive_weight"].get<double>();
  }
  return c;
}

nn::Tensor batch_loss(const nn::Tensor& logits, std::span<const int> targets, const LossConfig& cfg) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ContractError("batch_loss: logits " + nn::shape_string(logits.shape()) + " for " +
                        std::to_string(targets.size()) + " targets");
  }
  const std::size_t B = targets.size(), C = logits.dim(1);
  if (B == 0) throw ContractError("batch_loss: empty batch");
  const auto z = logits.values();
  std::vector<double> grad(B * C);
  double total = 0.0;
  if (cfg.kind == LossKind::bce_single_logit) {
    if (C != 1) throw ContractError("batch_loss: binary loss needs one logit per example");
    const double w = cfg.positive_weight.value_or(1.0);
    for (std::size_t i = 0; i < B; ++i) {
      const auto l = bce_smoothed(z[i], targets[i], cfg.label_smoothing, w);
      total += l.loss;
      grad[i] = l.grad;
    }
  } else {
    std::span<const double> weights;
    if (cfg.class_weights) weights = cfg.class_weights->weights;
    for (std::size_t i = 0; i < B; ++i) {
      const auto l = weighted_cross_entropy(z.subspan(i * C, C), targets[i], weights, cfg.label_smoothing);
      total += l.loss;
      std::copy(l.grad.begin(), l.grad.end(), grad.begin() + static_cast<std::ptrdiff_t>(i * C));
    }
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  for (double& g : grad) g *= inv_b;
  return nn::detail::make_result({1}, {total * inv_b}, {logits}, [grad = std::move(grad)](nn::Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t k = 0; k < grad.size(); ++k) px.grad[k] += self.grad[0] * grad[k];
  });
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ContractError("train config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (patience == 0) fail("patience must be >= 1");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
  if (train_stride == 0 || val_stride == 0) fail("strides must be >= 1");
}

nlohmann::json augment_to_json(const signal::AugmentConfig& a) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : a.bands) {
    bands.push_back({{"name", std::string(signal::to_string(b.name))}, {"low_hz", b.low_hz}, {"high_hz", b.high_hz}});
  }
  return {{"time_mask_count", a.time_mask_count},
          {"time_mask_max_width", a.time_mask_max_width},
          {"bandstop_probability", a.bandstop_probability},
          {"filter_order", a.filter_order},
          {"bands", bands}};
}

signal::AugmentConfig augment_from_json(const nlohmann::json& j, signal::AugmentConfig a) {
  a.time_mask_count = j.value("time_mask_count", a.time_mask_count);
  a.time_mask_max_width = j.value("time_mask_max_width", a.time_mask_max_width);
  a.bandstop_probability = j.value("bandstop_probability", a.bandstop_probability);
  a.filter_order = j.value("filter_order", a.filter_order);
  if (j.contains("bands")) {
    a.bands.clear();
    for (const auto& b : j["bands"]) {
      signal::BandSpec spec = signal::default_band(signal::band_from_string(b.at("name").get<std::string>()));
      spec.low_hz = b.value("low_hz", spec.low_hz);
      spec.high_hz = b.value("high_hz", spec.high_hz);
      a.bands.push_back(spec);
    }
  }
  return a;
}


nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"decay_all", c.decay_all},
          {"group_size", c.group_size},
          {"fixed_groups", c.fixed_groups},
          {"train_stride", c.train_stride},
          {"val_stride", c.val_stride},
          {"augment", c.augment ? augment_to_json(*c.augment) : nlohmann::json(nullptr)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.decay_all = j.value("decay_all", c.decay_all);
    c.group_size = j.value("group_size", c.group_size);
    c.fixed_groups = j.value("fixed_groups", c.fixed_groups);
    c.train_stride = j.value("train_stride", c.train_stride);
    c.val_stride = j.value("val_stride", c.val_stride);
    if (j.contains("augment")) {
      if (j["augment"].is_null()) c.augment.reset();
      else c.augment = augment_from_json(j["augment"], c.augment.value_or(signal::AugmentConfig{}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  return c;
}

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                  std::span<double> v, std::size_t step, const TrainConfig& cfg, bool decay) {
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ContractError("adamw_update: shape mismatch");
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  const double shrink = decay ? 1.0 - cfg.learning_rate * cfg.weight_decay : 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] / c1, vhat = v[i] / c2;
    p[i] = p[i] * shrink - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
}

void adamw_step(std::vector<nn::Parameter>& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adamw_step: optimizer state does not match parameters");
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++state.step;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    std::span<const double> g = t.grad();
    if (g.size() != t.numel()) {
      zeros.assign(t.numel(), 0.0);
      g = zeros;
    }
    adamw_update(t.mutable_values(), g, state.m[i], state.v[i], state.step, cfg,
                 params[i].decay || cfg.decay_all);
  }
}

// ---------------------------------------------------------------------------

std::string log_jsonl(const std::vector<EpochRecord>& log, bool timing) {
  std::string out;
  for (const auto& r : log) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_f1_macro"] = r.val_f1_macro;
    j["patience_counter"] = r.patience_counter;
    if (timing) j["wall_seconds"] = r.wall_seconds;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset record_windows(const pipeline::Recording& rec, std::size_t window, std::size_t stride,
                       pipeline::Split split) {
  Dataset ds;
  ds.split = split;
  ds.class_names = {"silence", "speech"};
  for (auto off : signal::window_offsets(rec.signal.samples(), window, stride)) {
    ds.windows.push_back(rec.signal.slice(off, window));
    ds.labels.push_back(infer::center_label(rec.labels, off, window));
  }
  return ds;
}

namespace {

Dataset augment_all(Dataset ds, const signal::AugmentConfig& aug, std::uint64_t seed, std::size_t epoch) {
  auto rng = make_rng({seed, kAugmentStream, epoch});
  for (auto& w : ds.windows) w = signal::meg_augment(w, aug, rng);
  return ds;
}

}  // namespace

FitData window_fit_data(Dataset train, Dataset validation, const TrainConfig& cfg) {
  auto base = std::make_shared<const Dataset>(std::move(train));
  const std::size_t group = cfg.group_size;
  const bool fixed = cfg.fixed_groups;
  const std::uint64_t seed = cfg.seed;
  const auto aug = cfg.augment;
  if (aug && base->size()) aug->validate(base->samples(), base->sample_rate_hz());
  FitData data;
  data.validation = std::move(validation);
  data.train_epoch = [base, group, fixed, seed, aug](std::size_t epoch) {
    Dataset ds;
    if (group > 0) {
      const std::uint64_t grouping_epoch = fixed ? 1 : epoch;
      auto rng = make_rng({seed, kGroupStream, grouping_epoch});
      const auto plan = pipeline::make_grouping_plan(base->labels, group, rng());
      ds = pipeline::averaged_dataset(*base, plan);
    } else {
      ds = *base;
    }
    if (aug) ds = augment_all(std::move(ds), *aug, seed, epoch);
    return ds;
  };
  return data;
}

FitData speech_fit_data(const pipeline::Recording& train, const pipeline::Recording& validation,
                        std::size_t window, const TrainConfig& cfg) {
  auto base = std::make_shared<const Dataset>(record_windows(train, window, cfg.train_stride, pipeline::Split::train));
  const auto aug = cfg.augment;
  if (aug) aug->validate(window, train.signal.sample_rate_hz());
  const std::uint64_t seed = cfg.seed;
  FitData data;
  data.validation = record_windows(validation, window, cfg.val_stride, pipeline::Split::validation);
  data.train_epoch = [base, aug, seed](std::size_t epoch) {
    if (!aug) return *base;
    return augment_all(*base, *aug, seed, epoch);
  };
  return data;
}

std::vector<int> predict_labels(const ConformerModel& model, const Dataset& ds) {
  if (ds.size() == 0) return {};
  const auto logits = infer::predict_logits(model, ds.windows);
  if (model.config().output_dim() == 1) {
    std::vector<int> out;
    out.reserve(logits.size());
    for (const auto& r : logits) out.push_back(r[0] >= 0.0 ? 1 : 0);
    return out;
  }
  return eval::argmax_rows(logits);
}

double window_f1_macro(const ConformerModel& model, const Dataset& ds) {
  const auto pred = predict_labels(model, ds);
  const std::size_t n_classes = std::max<std::size_t>(ds.n_classes(), model.config().output_dim() == 1 ? 2 : model.config().output_dim());
  return eval::confusion_metrics(ds.labels, pred, n_classes).f1_macro;
}

FitResult fit(ConformerModel& model, const FitData& data, const LossConfig& loss, const TrainConfig& cfg,
              const FitCallbacks& callbacks) {
  cfg.validate();
  loss.validate();
  const bool binary = model.config().output_dim() == 1;
  if (binary != (loss.kind == LossKind::bce_single_logit)) {
    throw ContractError("fit: loss kind does not match the model head");
  }
  if (!data.train_epoch) throw ContractError("fit: no training data");
  if (!data.validate && data.validation.size() == 0) throw ContractError("fit: empty validation split");

  using clock = std::chrono::steady_clock;
  auto dropout_rng = make_rng({cfg.seed, kDropoutStream});
  AdamState state;
  FitResult result;
  double best = 0.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = clock::now();
    const Dataset examples = data.train_epoch(epoch);
    if (examples.size() == 0) throw ContractError("fit: empty training split at epoch " + std::to_string(epoch));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    auto order_rng = make_rng({cfg.seed, kOrderStream, epoch});
    std::shuffle(order.begin(), order.end(), order_rng);

    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::vector<signal::MegWindow> windows;
      std::vector<int> targets;
      windows.reserve(len);
      for (std::size_t i = 0; i < len; ++i) {
        windows.push_back(examples.windows[order[start + i]]);
        targets.push_back(examples.labels[order[start + i]]);
      }
      model.zero_grad();
      const auto logits = model.forward(infer::stack_windows(windows), nn::Mode::train, &dropout_rng);
      const auto l = batch_loss(logits, targets, loss);
      const double value = l.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / cfg.batch_size));
      }
      nn::backward(l);
      adamw_step(model.parameters(), state, cfg);
      total += value * static_cast<double>(len);
    }
    model.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(examples.size());
    rec.val_f1_macro = data.validate ? data.validate(model, epoch) : window_f1_macro(model, data.validation);
    if (epoch == 1 || rec.val_f1_macro > best) {
      best = rec.val_f1_macro;
      since_best = 0;
      result.best = model.clone();
      result.best_epoch = epoch;
      result.best_val_f1 = best;
    } else {
      ++since_best;
    }
    rec.patience_counter = since_best;
    rec.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.log.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<SeedRun> multi_seed(const Protocol& protocol, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ContractError("multi_seed: at least one seed is required");
  std::vector<SeedRun> runs(seeds.size());
  const auto run_seed = [&](std::size_t i) {
    SeedRun& run = runs[i];
    const std::uint64_t seed = seeds[i];
    run.seed = seed;
    try {
      TrainConfig cfg = protocol.train;
      cfg.seed = seed;
      auto model = ConformerModel::init(protocol.model, seed);
      const auto data = protocol.data(seed);
      auto fitted = fit(model, data, protocol.loss, cfg);
      run.best_epoch = fitted.best_epoch;
      run.val_f1 = fitted.best_val_f1;
      run.log = std::move(fitted.log);
      if (protocol.test) run.test = protocol.test(fitted.best);
      if (protocol.out_dir) {
        const std::string stem = "seed_" + std::to_string(seed);
        run.checkpoint = *protocol.out_dir / (stem + ".megc");
        nlohmann::json meta{{"seed", seed}, {"epoch", run.best_epoch}, {"val_f1_macro", run.val_f1}};
        nn::save_checkpoint(run.checkpoint, fitted.best, meta);
        io::write_file_atomic(*protocol.out_dir / (stem + ".log.jsonl"), log_jsonl(run.log, protocol.timing));
      }
      run.model = std::move(fitted.best);
      run.ok = true;
    } catch (const std::exception& e) {
      run.ok = false;
      run.error = e.what();
    }
  };
  // Seeds are independent; each worker takes the next unclaimed index.
  const std::size_t workers = std::min(infer::worker_count(), seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_seed(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) run_seed(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::stable_sort(runs.begin(), runs.end(), [](const SeedRun& a, const SeedRun& b) {
    if (a.ok != b.ok) return a.ok;
    return a.val_f1 > b.val_f1;
  });
  if (protocol.out_dir) {
    io::write_file_atomic(*protocol.out_dir / "manifest.json", manifest_json(runs).dump(2) + "\n");
  }
  return runs;
}

nlohmann::json manifest_json(const std::vector<SeedRun>& runs) {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json e;
    e["seed"] = r.seed;
    e["status"] = r.ok ? "ok" : "failed";
    if (!r.ok) e["error"] = r.error;
    e["best_epoch"] = r.best_epoch;
    e["val_f1_macro"] = r.val_f1;
    e["checkpoint"] = r.checkpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.checkpoint.filename().string());
    e["test"] = r.test ? eval::to_json(*r.test) : nlohmann::json(nullptr);
    j["runs"].push_back(e);
  }
  return j;
}

}  // namespace megc::train
