// SPDX-License-Identifier: Apache-2.0
//
// Labeled window collections, the MEGW container, synthetic data, ISNS class
// weights, per-epoch averaging groups and phonetic-feature relabeling.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "megc/signal.hpp"

namespace megc::pipeline {

using signal::MegWindow;

enum class Split { train, validation, test, holdout };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
  std::vector<MegWindow> windows;
  std::vector<int> labels;
  Split split = Split::train;
  std::vector<std::string> class_names;

  std::size_t size() const { return windows.size(); }
  std::size_t n_classes() const { return class_names.size(); }
  std::size_t channels() const { return windows.empty() ? 0 : windows.front().channels(); }
  std::size_t samples() const { return windows.empty() ? 0 : windows.front().samples(); }
  double sample_rate_hz() const { return windows.empty() ? 0.0 : windows.front().sample_rate_hz(); }

  /// Counts per class id, length n_classes().
  std::vector<std::size_t> class_counts() const;
  /// Throws ContractError on length mismatch, labels out of range or mixed
  /// window shapes / rates.
  void validate() const;
  /// Sub-dataset with the windows at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// The 39-symbol ARPAbet inventory.
const std::vector<std::string>& arpabet_inventory();

// MEGW container:
//   magic "MEGW" | version u32 | n_windows u32 | channels u32 | samples u32
//   | sample_rate f32 | class_count u16 | class names (u16 length + UTF-8)
//   | labels u16[n_windows] | window data f32, window-major then channel-major.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes, Split split);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
/// Split is taken from the file stem when it names one ("train.megw"),
/// otherwise Split::test.
Dataset load_dataset(const std::filesystem::path& path);

/// A continuous labeled record: speech datasets store consecutive segments of
/// one recording, so concatenating their windows restores the time axis.
struct Recording {
  MegWindow signal;
  std::vector<int> labels;  // one per sample
};

Recording concatenate(const Dataset& ds);

// ---------------------------------------------------------------------------
// Class weighting

struct ClassWeights {
  std::vector<double> weights;
};

/// w_c = (1/sqrt(n_c)) * C / sum_k (1/sqrt(n_k)); unit mean.
ClassWeights compute_class_weights(std::span<const std::size_t> counts);

/// sqrt(n_neg / n_pos): the two-class ISNS ratio applied to the positive term.
double positive_class_weight(std::size_t n_pos, std::size_t n_neg);

// ---------------------------------------------------------------------------
// Dynamic grouping

struct Group {
  int label = 0;
  std::vector<std::size_t> members;
};

struct GroupingPlan {
  std::size_t group_size = 0;
  std::vector<Group> groups;
  std::uint64_t epoch_seed = 0;
};

/// Per class (ascending id), shuffle that class's indices with an rng seeded
/// by (epoch_seed, class id) and cut consecutive blocks of group_size; the
/// remainder is dropped.
GroupingPlan make_grouping_plan(std::span<const int> labels, std::size_t group_size,
                                std::uint64_t epoch_seed);

/// Element-wise mean of the member windows.
MegWindow average_group(const Dataset& ds, const Group& group);

/// Dataset of averaged windows, one per group.
Dataset averaged_dataset(const Dataset& ds, const GroupingPlan& plan);

// ---------------------------------------------------------------------------
// Phonetic features

struct FeatureMap {
  std::string name;
  std::vector<int> positive;  // class ids

  void validate(std::size_t n_classes) const;
};

std::vector<std::string> feature_names();
/// Phoneme symbols of the default assignment for `feature`.
std::vector<std::string> default_feature_symbols(const std::string& feature);
/// Resolve symbols against the dataset's class names; unknown symbols are ignored.
FeatureMap make_feature_map(const std::string& name, std::span<const std::string> symbols,
                            std::span<const std::string> class_names);
/// Feature maps from a JSON document {"features": {"<name>": ["SYM", ...]}}.
std::vector<FeatureMap> feature_maps_from_json(const nlohmann::json& doc,
                                               std::span<const std::string> class_names);
nlohmann::json default_feature_document();

/// Binary relabeling: 1 iff the phoneme id is in the positive set.
Dataset map_to_feature(const Dataset& ds, const FeatureMap& fm);

// ---------------------------------------------------------------------------
// Synthetic data

struct SplitSpec {
  Split split = Split::train;
  std::vector<std::size_t> counts;           // phoneme task: windows per class
  std::size_t segments = 0;                  // speech task: segments in the record
  double drift_low = 1.0, drift_high = 1.0;  // per-session gain range
  std::vector<double> session_gains;         // explicit gains, overrides the range
};

struct GeneratorSpec {
  enum class Task { phoneme, speech } task = Task::phoneme;
  std::size_t channels = 16;
  std::size_t samples = 32;
  double sample_rate_hz = 250.0;
  std::size_t n_classes = 4;
  std::vector<std::string> class_names;  // defaults to ARPAbet prefix
  std::optional<double> snr;             // unset: noiseless
  std::size_t sinusoids_per_class = 3;
  double freq_low_hz = 4.0, freq_high_hz = 40.0;
  std::size_t sessions = 4;
  // speech only
  std::size_t segment_samples = 25;
  double speech_fraction = 0.75;
  double mean_speech_segments = 8.0;
  std::vector<SplitSpec> splits;

  void validate() const;
};

/// Parses the generator document; throws FormatError naming the offending field.
GeneratorSpec generator_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const GeneratorSpec& spec);

/// One split. Class templates depend only on `seed`, so splits generated from
/// the same seed share them; noise and gains also depend on the split.
Dataset synthesize_dataset(const GeneratorSpec& spec, const SplitSpec& split, std::uint64_t seed);
std::map<Split, Dataset> synthesize_splits(const GeneratorSpec& spec, std::uint64_t seed);

/// Class-balanced desk-scale phoneme generator spec.
GeneratorSpec desk_phoneme_spec(std::size_t n_classes, std::size_t per_class_train,
                                std::size_t per_class_eval, double snr);

}  // namespace megc::pipeline
