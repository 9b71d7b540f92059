// SPDX-License-Identifier: Apache-2.0
//
// Losses, AdamW, the early-stopping training loop and multi-seed runs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "megc/metrics.hpp"
#include "megc/model.hpp"
#include "megc/pipeline.hpp"
#include "megc/signal.hpp"

namespace megc::train {

using nn::ConformerModel;
using pipeline::Dataset;

// ---------------------------------------------------------------------------
// Losses

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;  // dloss/dz
};

/// Label-smoothed, positively weighted binary cross-entropy on a logit.
/// Target y' = y(1-s) + s/2.
ScalarLoss bce_smoothed(double logit, int target, double smoothing, double positive_weight = 1.0);

struct VectorLoss {
  double loss = 0.0;
  std::vector<double> grad;  // dloss/dlogits
};

/// -weights[target] * log softmax(logits)[target]. Empty `weights` means 1.
/// `smoothing` mixes the one-hot target with the uniform distribution.
VectorLoss weighted_cross_entropy(std::span<const double> logits, int target,
                                  std::span<const double> weights, double smoothing = 0.0);

enum class LossKind { bce_single_logit, weighted_cross_entropy };

struct LossConfig {
  LossKind kind = LossKind::weighted_cross_entropy;
  double label_smoothing = 0.0;
  std::optional<pipeline::ClassWeights> class_weights;
  std::optional<double> positive_weight;

  void validate() const;
};

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

/// Mean loss over the batch as a differentiable scalar. logits is [B, 1]
/// for the binary loss or [B, C].
nn::Tensor batch_loss(const nn::Tensor& logits, std::span<const int> targets, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Optimizer

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-2;
  std::size_t batch_size = 256;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Also decay norm gains and biases.
  bool decay_all = false;

  // Phoneme task: averaging group size (0 = raw windows) and whether the
  // grouping is frozen after the first epoch.
  std::size_t group_size = 0;
  bool fixed_groups = false;
  // Speech task: window strides for training and per-epoch validation.
  std::size_t train_stride = 60;
  std::size_t val_stride = 60;
  std::optional<signal::AugmentConfig> augment;

  void validate() const;
};

nlohmann::json augment_to_json(const signal::AugmentConfig& a);
/// Fields missing from `j` keep the values of `base`; bands are named.
signal::AugmentConfig augment_from_json(const nlohmann::json& j, signal::AugmentConfig base = {});

nlohmann::json to_json(const TrainConfig& c);
/// Fields missing from `j` keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One AdamW update of a single tensor at (1-based) `step`: decoupled decay
/// p -= lr*wd*p when `decay`, then the bias-corrected Adam step.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::size_t step, const TrainConfig& cfg, bool decay);

/// Updates every parameter from its gradient. Throws NumericError naming the
/// first parameter with a non-finite gradient, before touching any value.
void adamw_step(std::vector<nn::Parameter>& params, AdamState& state, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_f1_macro = 0.0;
  std::size_t patience_counter = 0;
  double wall_seconds = 0.0;
};

/// One JSON object per line; wall_seconds only when `timing` is set, so logs
/// of identical runs compare equal byte for byte.
std::string log_jsonl(const std::vector<EpochRecord>& log, bool timing);

/// Training material for one run.
struct FitData {
  /// Labeled examples of epoch `epoch` (1-based), before batching.
  std::function<Dataset(std::size_t epoch)> train_epoch;
  /// Validation windows, scored directly.
  Dataset validation;
  /// Optional override of the validation score (default: F1-macro of the
  /// model on `validation`).
  std::function<double(const ConformerModel&, std::size_t epoch)> validate;
};

/// Phoneme (or phonetic-feature) data. With cfg.group_size > 0 every epoch
/// trains on a fresh averaged grouping of `train`; fixed_groups keeps the
/// first epoch's grouping. Optional augmentation is applied after averaging.
FitData window_fit_data(Dataset train, Dataset validation, const TrainConfig& cfg);

/// Speech data from continuous records: windows of `window` samples at
/// train_stride (augmented when cfg.augment is set) labeled by their center
/// sample; validation windows at val_stride.
FitData speech_fit_data(const pipeline::Recording& train, const pipeline::Recording& validation,
                        std::size_t window, const TrainConfig& cfg);

/// Windows and center labels of a record.
Dataset record_windows(const pipeline::Recording& rec, std::size_t window, std::size_t stride,
                       pipeline::Split split);

struct FitResult {
  ConformerModel best;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochRecord> log;
  bool stopped_early = false;
};

struct FitCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains `model` in place and returns a snapshot of the epoch with the best
/// validation score (earliest on ties). Stops once patience epochs pass
/// without improvement or at max_epochs.
FitResult fit(ConformerModel& model, const FitData& data, const LossConfig& loss,
              const TrainConfig& cfg, const FitCallbacks& callbacks = {});

/// Validation F1-macro of a model on windows.
double window_f1_macro(const ConformerModel& model, const Dataset& ds);

/// Predicted labels (argmax, or logit >= 0 for a single logit).
std::vector<int> predict_labels(const ConformerModel& model, const Dataset& ds);

// ---------------------------------------------------------------------------
// Multi-seed protocol

struct Protocol {
  nn::ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  /// Fit data for a seed.
  std::function<FitData(std::uint64_t seed)> data;
  /// Test metrics of a trained model (optional).
  std::function<eval::MetricReport(const ConformerModel&)> test;
  /// Checkpoints, logs and the manifest go here when set.
  std::optional<std::filesystem::path> out_dir;
  bool timing = false;
};

struct SeedRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t best_epoch = 0;
  double val_f1 = 0.0;
  std::optional<eval::MetricReport> test;
  std::optional<ConformerModel> model;
  std::vector<EpochRecord> log;
  std::filesystem::path checkpoint;
};

/// Runs fit for each seed; a failing seed is recorded rather than aborting
/// the batch. Sorted by validation F1-macro, descending (failures last).
std::vector<SeedRun> multi_seed(const Protocol& protocol, std::span<const std::uint64_t> seeds);

nlohmann::json manifest_json(const std::vector<SeedRun>& runs);

}  // namespace megc::train
