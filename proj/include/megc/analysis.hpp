// SPDX-License-Identifier: Apache-2.0
//
// RMS energy distributions across splits, ablation tables and data-size sweeps.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "megc/metrics.hpp"
#include "megc/pipeline.hpp"

namespace megc::eval {

struct NamedDataset {
  std::string name;
  const pipeline::Dataset* dataset = nullptr;
};

struct RmsSplitSummary {
  std::string name;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> density;
  bool bimodal = false;
};

struct RmsAnalysis {
  std::vector<double> edges;
  std::vector<RmsSplitSummary> splits;
  std::vector<std::string> warnings;

  /// "bin_left,bin_right,<split>..." with one density column per split.
  std::string csv() const;
  nlohmann::json summary() const;
};

/// Bimodal when the density has two local maxima with a trough between them
/// below 60% of the lower peak.
bool is_bimodal(std::span<const double> density, double trough_ratio = 0.6);

/// Per-window RMS per split over shared bins (`bins` equal-width bins spanning
/// every split, or explicit ascending `edges`). Empty splits are skipped
/// with a warning.
RmsAnalysis rms_split_analysis(std::span<const NamedDataset> splits, std::size_t bins);
RmsAnalysis rms_split_analysis(std::span<const NamedDataset> splits, std::vector<double> edges);

struct AblationRow {
  std::string name;
  std::vector<double> scores;
  double mean = 0.0;
  double std = 0.0;        // sample (n - 1)
  double delta = 0.0;      // mean - baseline mean
  double relative = 0.0;   // delta / baseline mean
  std::optional<WilcoxonResult> test;  // vs baseline; unset for the baseline
  bool significant = false;            // p <= 0.01
  std::string note;                    // "baseline", "no difference"
};

struct AblationTable {
  std::vector<AblationRow> rows;  // baseline first, then variants in input order

  /// Aligned text with "mean ± std" in percent and a star when significant.
  std::string text() const;
  std::string csv() const;
  nlohmann::json json() const;
};

inline constexpr double kSignificance = 0.01;

/// "87.59 ± 0.70" from scores in [0, 1].
std::string format_mean_std(double mean, double std);

/// Paired (by seed index) comparison of every variant against the baseline.
/// Throws ContractError on unequal score counts or a missing baseline.
AblationTable ablation_compare(const std::vector<std::pair<std::string, std::vector<double>>>& variants,
                               const std::string& baseline_name);

double mean_of(std::span<const double> v);
double sample_std(std::span<const double> v);

/// Stratified nested prefix: per class, indices permuted by an rng fixed by
/// `seed`, and the first floor(fraction * n_c) kept. Smaller fractions give
/// subsets of larger ones for the same seed.
std::vector<std::size_t> nested_subset(std::span<const int> labels, double fraction, std::uint64_t seed);

struct SweepPoint {
  double fraction = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> scores;
  double mean = 0.0;
  double std = 0.0;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
  std::vector<std::string> warnings;

  /// "fraction,n_samples,mean,std".
  std::string csv() const;
  nlohmann::json json() const;
};

/// For each fraction and seed, trains via `run(subset, seed)` (which returns
/// the test score). Fractions must be ascending in (0, 1]; fractions giving
/// no samples are skipped with a warning.
SweepCurve data_size_sweep(std::span<const double> fractions, const pipeline::Dataset& train,
                           std::span<const std::uint64_t> seeds,
                           const std::function<double(const pipeline::Dataset&, std::uint64_t)>& run);

}  // namespace megc::eval
