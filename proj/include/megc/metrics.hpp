// SPDX-License-Identifier: Apache-2.0
//
// Confusion-matrix metrics, AUROC and the exact Wilcoxon signed-rank test.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace megc::eval {

/// How a class that never occurs in y_true nor y_pred enters the macro mean.
enum class AbsentClassPolicy {
  exclude,     // dropped from F1-macro and balanced accuracy (default)
  count_zero,  // contributes 0
};

struct ClassStats {
  std::size_t support = 0, predicted = 0, tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricReport {
  std::size_t n_classes = 0;
  std::size_t n_samples = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
  std::vector<ClassStats> per_class;
  double f1_macro = 0.0;
  double balanced_accuracy = 0.0;
  double accuracy = 0.0;
  // Binary tasks only; class 1 is the positive class.
  std::optional<double> f1_pos, jaccard;
  std::optional<double> auroc_macro;
};

nlohmann::json to_json(const MetricReport& r);

/// Per-class precision/recall/F1 with 0/0 -> 0. Throws ContractError on
/// length mismatch or out-of-range labels.
MetricReport confusion_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                               std::size_t n_classes,
                               AbsentClassPolicy policy = AbsentClassPolicy::exclude);

/// Area under the ROC curve via the midrank statistic (ties count half).
/// Throws UndefinedMetricError without both positives and negatives.
double auroc_binary(std::span<const int> positive, std::span<const double> scores);

/// One-vs-rest macro AUROC. `scores` is N x C, or N x 1 for a binary task
/// with a single positive-class score. Classes lacking positives or
/// negatives are skipped; UndefinedMetricError when none remain.
double auroc_macro(std::span<const int> y_true, const std::vector<std::vector<double>>& scores,
                   std::size_t n_classes);

std::vector<int> argmax_rows(const std::vector<std::vector<double>>& rows);

enum class WilcoxonMode { paired_two_sided, one_sample_greater };

struct WilcoxonResult {
  double statistic = 0.0;  // W = min(W+, W-) two-sided, W+ one-sided
  double p_value = 1.0;
  std::size_t n_effective = 0;
  WilcoxonMode mode = WilcoxonMode::paired_two_sided;
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactMax = 25;

/// Signed-rank test on the differences d_i = a_i - b_i. Zeros are dropped,
/// |d| ranked with midranks. Exact null distribution for n_eff <= 25,
/// normal approximation with tie and continuity correction above.
/// Throws UndefinedTestError when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMode mode = WilcoxonMode::paired_two_sided);
/// d_i = a_i - mu.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, double mu,
                                    WilcoxonMode mode = WilcoxonMode::one_sample_greater);

std::string to_string(WilcoxonMode m);

}  // namespace megc::eval
