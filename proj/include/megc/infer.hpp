// SPDX-License-Identifier: Apache-2.0
//
// Batched window inference, speech tracks with run-length smoothing, and
// majority-vote ensembles.
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "megc/metrics.hpp"
#include "megc/model.hpp"
#include "megc/pipeline.hpp"
#include "megc/signal.hpp"

namespace megc::infer {

using signal::MegWindow;

/// Stacks equally shaped windows into a [B, channels, samples] tensor.
nn::Tensor stack_windows(std::span<const MegWindow> windows);

/// Anything mapping windows to logits. Implementations must be safe to call
/// concurrently.
class WindowClassifier {
 public:
  virtual ~WindowClassifier() = default;
  virtual std::size_t output_dim() const = 0;
  /// One logit row per window.
  virtual std::vector<std::vector<double>> logits(std::span<const MegWindow> windows) const = 0;
  /// Input shape the classifier expects, or 0 when it accepts anything.
  virtual std::size_t in_channels() const { return 0; }
  virtual std::size_t window_samples() const { return 0; }
};

class ModelClassifier final : public WindowClassifier {
 public:
  explicit ModelClassifier(std::shared_ptr<const nn::ConformerModel> model,
                           std::size_t batch_size = 64);

  std::size_t output_dim() const override { return model_->config().output_dim(); }
  std::vector<std::vector<double>> logits(std::span<const MegWindow> windows) const override;
  std::size_t in_channels() const override { return model_->config().in_channels; }
  std::size_t window_samples() const override { return model_->config().window_samples; }
  const nn::ConformerModel& model() const { return *model_; }

 private:
  std::shared_ptr<const nn::ConformerModel> model_;
  std::size_t batch_size_;
};

/// Eval-mode logits of a model, batched; parallel over batches up to the
/// MEGC_THREADS cap, with results in input order.
std::vector<std::vector<double>> predict_logits(const nn::ConformerModel& model,
                                                std::span<const MegWindow> windows,
                                                std::size_t batch_size = 64);

/// Row-wise softmax (multiclass) or sigmoid (single logit).
std::vector<std::vector<double>> probabilities(const std::vector<std::vector<double>>& logits);

double sigmoid(double z);

struct PredictionTrack {
  std::vector<double> probabilities;  // one per window
  std::vector<int> labels;            // probability >= threshold
  std::vector<std::size_t> offsets;   // window start sample
  std::size_t window = 0;
  std::size_t stride = 1;
  double sample_rate_hz = 0.0;
  std::size_t series_length = 0;
};

/// Slides a window of `window` samples at `stride` over `series` and scores
/// each with a single-logit classifier. Too-short series give an empty track.
PredictionTrack predict_track(const WindowClassifier& clf, const MegWindow& series,
                              std::size_t window, std::size_t stride, double threshold = 0.5);

/// Target of a speech window: the label of its center sample.
int center_label(std::span<const int> sample_labels, std::size_t offset, std::size_t window);

/// Per-sample labels: every sample takes the label of the window whose
/// center (offset + window/2) is nearest; ties go to the earlier window.
std::vector<int> expand_to_samples(const PredictionTrack& track);
/// Same alignment for the window probabilities.
std::vector<double> expand_probabilities(const PredictionTrack& track);

/// Zeroes every maximal run of 1s shorter than min_run.
std::vector<int> smooth_runs(std::span<const int> labels, std::size_t min_run);

struct Vote {
  int label = 0;
  std::vector<int> member_votes;
};

/// Majority of member argmax votes; ties by the larger summed member
/// probability, then by the lower class id. `member_probs` holds one
/// probability row per member.
Vote majority_vote(const std::vector<std::vector<double>>& member_probs);

struct Ensemble {
  std::vector<std::shared_ptr<const WindowClassifier>> members;

  /// Nonempty, equal output dimensions.
  void validate() const;
  /// Member probabilities per window: [window][member][class].
  std::vector<std::vector<std::vector<double>>> member_probabilities(
      std::span<const MegWindow> windows) const;
  std::vector<Vote> vote(std::span<const MegWindow> windows) const;
};

struct HoldoutPrediction {
  std::vector<int> predicted;
  std::vector<std::vector<int>> member_votes;  // empty for a single model
  std::vector<std::vector<double>> probabilities;  // mean member probability per window
};

/// Predicted class per window of a (pre-averaged or raw) dataset. Throws
/// ContractError when the head or input shape does not match the dataset.
HoldoutPrediction evaluate_holdout_protocol(const WindowClassifier& clf, const pipeline::Dataset& ds);
HoldoutPrediction evaluate_holdout_protocol(const Ensemble& ensemble, const pipeline::Dataset& ds);

struct SpeechEvaluation {
  std::vector<double> probabilities;  // per sample, from the nearest window
  std::vector<int> raw, smoothed;     // per sample
  eval::MetricReport raw_metrics, metrics;
};

/// Speech scoring of a continuous record: member probabilities averaged per
/// window, thresholded, expanded to samples, run-length smoothed, then scored
/// against the per-sample labels (AUROC when both classes occur).
SpeechEvaluation evaluate_speech(std::span<const std::shared_ptr<const WindowClassifier>> members,
                                 const pipeline::Recording& record, std::size_t window, std::size_t stride,
                                 std::size_t min_run, double threshold = 0.5);

/// "index,probability,raw_label,smoothed_label", one row per sample.
std::string speech_csv(const std::vector<double>& probabilities, const std::vector<int>& raw,
                       const std::vector<int>& smoothed);
/// "index,predicted_class,votes" with votes joined by ';'.
std::string phoneme_csv(const HoldoutPrediction& p);

/// Worker cap from MEGC_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

}  // namespace megc::infer
