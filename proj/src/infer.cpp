// SPDX-License-Identifier: Apache-2.0
#include "megc/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "megc/error.hpp"

namespace megc::infer {

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MEGC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

nn::Tensor stack_windows(std::span<const MegWindow> windows) {
  if (windows.empty()) throw ContractError("stack_windows: no windows");
  const std::size_t C = windows.front().channels(), T = windows.front().samples();
  std::vector<double> values;
  values.reserve(windows.size() * C * T);
  for (const auto& w : windows) {
    if (w.channels() != C || w.samples() != T) throw ContractError("stack_windows: mixed window shapes");
    auto d = w.data();
    values.insert(values.end(), d.begin(), d.end());
  }
  return nn::Tensor::from_values({windows.size(), C, T}, std::move(values));
}

std::vector<std::vector<double>> predict_logits(const nn::ConformerModel& model,
                                                std::span<const MegWindow> windows,
                                                std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("predict_logits: batch_size must be >= 1");
  const std::size_t out_dim = model.config().output_dim();
  std::vector<std::vector<double>> out(windows.size());
  const std::size_t n_batches = (windows.size() + batch_size - 1) / batch_size;
  auto run = [&](std::size_t b) {
    const std::size_t start = b * batch_size;
    const std::size_t len = std::min(batch_size, windows.size() - start);
    const auto logits = model.predict(stack_windows(windows.subspan(start, len)));
    auto v = logits.values();
    for (std::size_t i = 0; i < len; ++i) {
      out[start + i].assign(v.begin() + static_cast<std::ptrdiff_t>(i * out_dim),
                            v.begin() + static_cast<std::ptrdiff_t>((i + 1) * out_dim));
    }
  };
  const std::size_t workers = std::min(worker_count(), n_batches);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run(b);
    return out;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = w; b < n_batches; b += workers) run(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

ModelClassifier::ModelClassifier(std::shared_ptr<const nn::ConformerModel> model, std::size_t batch_size)
    : model_(std::move(model)), batch_size_(batch_size) {
  if (!model_) throw ContractError("ModelClassifier: null model");
}

std::vector<std::vector<double>> ModelClassifier::logits(std::span<const MegWindow> windows) const {
  return predict_logits(*model_, windows, batch_size_);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::vector<double>> probabilities(const std::vector<std::vector<double>>& logits) {
  std::vector<std::vector<double>> out;
  out.reserve(logits.size());
  for (const auto& row : logits) {
    if (row.size() == 1) {
      out.push_back({sigmoid(row[0])});
      continue;
    }
    const double m = *std::max_element(row.begin(), row.end());
    std::vector<double> p(row.size());
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) s += (p[k] = std::exp(row[k] - m));
    for (double& x : p) x /= s;
    out.push_back(std::move(p));
  }
  return out;
}

PredictionTrack predict_track(const WindowClassifier& clf, const MegWindow& series, std::size_t window,
                              std::size_t stride, double threshold) {
  if (clf.output_dim() != 1) throw ContractError("predict_track: needs a single-logit classifier");
  PredictionTrack track;
  track.window = window;
  track.stride = stride;
  track.sample_rate_hz = series.sample_rate_hz();
  track.series_length = series.samples();
  if (series.samples() == 0) return track;
  track.offsets = signal::window_offsets(series.samples(), window, stride);
  if (track.offsets.empty()) return track;
  // Score in chunks to bound memory on long records.
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < track.offsets.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, track.offsets.size() - start);
    std::vector<MegWindow> chunk;
    chunk.reserve(len);
    for (std::size_t i = 0; i < len; ++i) chunk.push_back(series.slice(track.offsets[start + i], window));
    for (const auto& row : clf.logits(chunk)) {
      const double p = sigmoid(row.at(0));
      track.probabilities.push_back(p);
      track.labels.push_back(p >= threshold ? 1 : 0);
    }
  }
  return track;
}

int center_label(std::span<const int> sample_labels, std::size_t offset, std::size_t window) {
  const std::size_t c = offset + window / 2;
  if (c >= sample_labels.size()) throw ContractError("center_label: window exceeds the label track");
  return sample_labels[c];
}

namespace {

// Window index whose center is nearest to each sample.
std::vector<std::size_t> nearest_window(const PredictionTrack& track) {
  std::vector<std::size_t> idx(track.series_length, 0);
  if (track.offsets.empty()) return idx;
  const std::size_t half = track.window / 2;
  std::size_t w = 0;
  for (std::size_t s = 0; s < track.series_length; ++s) {
    // Advance while the next center is strictly closer.
    while (w + 1 < track.offsets.size()) {
      const auto cur = static_cast<double>(track.offsets[w] + half);
      const auto next = static_cast<double>(track.offsets[w + 1] + half);
      const double x = static_cast<double>(s);
      if (std::abs(next - x) < std::abs(cur - x)) {
        ++w;
      } else {
        break;
      }
    }
    idx[s] = w;
  }
  return idx;
}

}  // namespace

std::vector<int> expand_to_samples(const PredictionTrack& track) {
  if (track.offsets.empty()) return std::vector<int>(track.series_length, 0);
  std::vector<int> out(track.series_length);
  const auto idx = nearest_window(track);
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = track.labels[idx[s]];
  return out;
}

std::vector<double> expand_probabilities(const PredictionTrack& track) {
  if (track.offsets.empty()) return std::vector<double>(track.series_length, 0.0);
  std::vector<double> out(track.series_length);
  const auto idx = nearest_window(track);
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = track.probabilities[idx[s]];
  return out;
}

std::vector<int> smooth_runs(std::span<const int> labels, std::size_t min_run) {
  if (min_run == 0) throw ContractError("smooth_runs: min_run must be >= 1");
  std::vector<int> out(labels.begin(), labels.end());
  std::size_t i = 0;
  while (i < out.size()) {
    if (out[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < out.size() && out[j] != 0) ++j;
    if (j - i < min_run) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), 0);
    i = j;
  }
  return out;
}

Vote majority_vote(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw ContractError("majority_vote: no members");
  const std::size_t C = member_probs.front().size();
  if (C == 0) throw ContractError("majority_vote: empty probability row");
  std::vector<std::size_t> votes(C, 0);
  std::vector<double> mass(C, 0.0);
  Vote v;
  for (const auto& row : member_probs) {
    if (row.size() != C) throw ContractError("majority_vote: members disagree on class count");
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ++votes[arg];
    v.member_votes.push_back(static_cast<int>(arg));
    for (std::size_t k = 0; k < C; ++k) mass[k] += row[k];
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < C; ++k) {
    if (votes[k] > votes[best] || (votes[k] == votes[best] && mass[k] > mass[best])) best = k;
  }
  v.label = static_cast<int>(best);
  return v;
}

void Ensemble::validate() const {
  if (members.empty()) throw ContractError("ensemble: no members");
  for (const auto& m : members) {
    if (!m) throw ContractError("ensemble: null member");
    if (m->output_dim() != members.front()->output_dim()) {
      throw ContractError("ensemble: members have different heads");
    }
  }
}

std::vector<std::vector<std::vector<double>>> Ensemble::member_probabilities(
    std::span<const MegWindow> windows) const {
  validate();
  std::vector<std::vector<std::vector<double>>> out(windows.size());
  for (const auto& m : members) {
    auto probs = probabilities(m->logits(windows));
    for (std::size_t i = 0; i < windows.size(); ++i) out[i].push_back(std::move(probs[i]));
  }
  return out;
}

std::vector<Vote> Ensemble::vote(std::span<const MegWindow> windows) const {
  std::vector<Vote> out;
  for (const auto& per_member : member_probabilities(windows)) out.push_back(majority_vote(per_member));
  return out;
}

namespace {

void check_compatible(const WindowClassifier& clf, const pipeline::Dataset& ds) {
  const std::size_t expected = ds.n_classes() == 2 && clf.output_dim() == 1 ? 1 : ds.n_classes();
  if (clf.output_dim() != expected) {
    throw ContractError("classifier has " + std::to_string(clf.output_dim()) + " outputs, dataset has " +
                        std::to_string(ds.n_classes()) + " classes");
  }
  if (ds.size() == 0) return;
  if (clf.in_channels() && clf.in_channels() != ds.channels()) {
    throw ContractError("classifier expects " + std::to_string(clf.in_channels()) + " channels, dataset has " +
                        std::to_string(ds.channels()));
  }
  if (clf.window_samples() && clf.window_samples() != ds.samples()) {
    throw ContractError("classifier expects " + std::to_string(clf.window_samples()) +
                        "-sample windows, dataset has " + std::to_string(ds.samples()));
  }
}

int decide(const std::vector<double>& probs) {
  if (probs.size() == 1) return probs[0] >= 0.5 ? 1 : 0;
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace

HoldoutPrediction evaluate_holdout_protocol(const WindowClassifier& clf, const pipeline::Dataset& ds) {
  check_compatible(clf, ds);
  HoldoutPrediction out;
  if (ds.size() == 0) return out;
  out.probabilities = probabilities(clf.logits(ds.windows));
  for (const auto& p : out.probabilities) out.predicted.push_back(decide(p));
  return out;
}

HoldoutPrediction evaluate_holdout_protocol(const Ensemble& ensemble, const pipeline::Dataset& ds) {
  ensemble.validate();
  for (const auto& m : ensemble.members) check_compatible(*m, ds);
  HoldoutPrediction out;
  if (ds.size() == 0) return out;
  for (auto& per_member : ensemble.member_probabilities(ds.windows)) {
    std::vector<double> mean(per_member.front().size(), 0.0);
    for (const auto& row : per_member) {
      for (std::size_t k = 0; k < row.size(); ++k) mean[k] += row[k] / static_cast<double>(per_member.size());
    }
    if (mean.size() == 1) {
      // Binary single-logit members vote over {0, 1}.
      std::vector<std::vector<double>> two;
      for (const auto& row : per_member) two.push_back({1.0 - row[0], row[0]});
      per_member = std::move(two);
    }
    auto v = majority_vote(per_member);
    out.predicted.push_back(v.label);
    out.member_votes.push_back(std::move(v.member_votes));
    out.probabilities.push_back(std::move(mean));
  }
  return out;
}

SpeechEvaluation evaluate_speech(std::span<const std::shared_ptr<const WindowClassifier>> members,
                                 const pipeline::Recording& record, std::size_t window, std::size_t stride,
                                 std::size_t min_run, double threshold) {
  if (members.empty()) throw ContractError("evaluate_speech: no classifiers");
  if (record.labels.size() != record.signal.samples()) throw ContractError("evaluate_speech: label track length mismatch");
  PredictionTrack track;
  for (std::size_t m = 0; m < members.size(); ++m) {
    auto t = predict_track(*members[m], record.signal, window, stride, threshold);
    if (m == 0) {
      track = std::move(t);
      continue;
    }
    for (std::size_t i = 0; i < t.probabilities.size(); ++i) track.probabilities[i] += t.probabilities[i];
  }
  if (members.size() > 1) {
    for (std::size_t i = 0; i < track.probabilities.size(); ++i) {
      track.probabilities[i] /= static_cast<double>(members.size());
      track.labels[i] = track.probabilities[i] >= threshold ? 1 : 0;
    }
  }
  SpeechEvaluation out;
  out.probabilities = expand_probabilities(track);
  out.raw = expand_to_samples(track);
  out.smoothed = smooth_runs(out.raw, min_run);
  out.raw_metrics = eval::confusion_metrics(record.labels, out.raw, 2);
  out.metrics = eval::confusion_metrics(record.labels, out.smoothed, 2);
  try {
    std::vector<std::vector<double>> scores;
    scores.reserve(out.probabilities.size());
    for (double p : out.probabilities) scores.push_back({p});
    out.metrics.auroc_macro = eval::auroc_macro(record.labels, scores, 2);
    out.raw_metrics.auroc_macro = out.metrics.auroc_macro;
  } catch (const UndefinedMetricError&) {
  }
  return out;
}

std::string speech_csv(const std::vector<double>& probabilities, const std::vector<int>& raw,
                       const std::vector<int>& smoothed) {
  if (probabilities.size() != raw.size() || raw.size() != smoothed.size()) {
    throw ContractError("speech_csv: column lengths differ");
  }
  std::ostringstream os;
  os.precision(9);
  os << "index,probability,raw_label,smoothed_label\n";
  for (std::size_t i = 0; i < raw.size(); ++i) {
    os << i << ',' << probabilities[i] << ',' << raw[i] << ',' << smoothed[i] << '\n';
  }
  return os.str();
}

std::string phoneme_csv(const HoldoutPrediction& p) {
  std::ostringstream os;
  os << "index,predicted_class,votes\n";
  for (std::size_t i = 0; i < p.predicted.size(); ++i) {
    os << i << ',' << p.predicted[i] << ',';
    if (i < p.member_votes.size()) {
      for (std::size_t k = 0; k < p.member_votes[i].size(); ++k) {
        if (k) os << ';';
        os << p.member_votes[i][k];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace megc::infer
