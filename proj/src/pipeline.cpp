// SPDX-License-Identifier: Apache-2.0
#include "megc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "megc/error.hpp"
#include "megc/io.hpp"
#include "megc/rng.hpp"

namespace megc::pipeline {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::holdout: return "holdout";
  }
  return "test";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "holdout") return Split::holdout;
  throw ContractError("unknown split '" + s + "'");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int l : labels) {
    if (l >= 0 && static_cast<std::size_t>(l) < counts.size()) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

void Dataset::validate() const {
  if (labels.size() != windows.size()) {
    throw ContractError("dataset: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(windows.size()) + " windows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes()) {
      throw ContractError("dataset: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(n_classes()) + ")");
    }
  }
  for (const auto& w : windows) {
    if (w.channels() != channels() || w.samples() != samples() ||
        w.sample_rate_hz() != sample_rate_hz()) {
      throw ContractError("dataset: windows differ in shape or sample rate");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.split = split;
  out.class_names = class_names;
  out.windows.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= windows.size()) throw ContractError("dataset subset index out of range");
    out.windows.push_back(windows[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

const std::vector<std::string>& arpabet_inventory() {
  static const std::vector<std::string> symbols = {
      "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY",
      "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY",
      "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
  return symbols;
}

std::string encode_dataset(const Dataset& ds) {
  ds.validate();
  if (ds.n_classes() > 0xffff) throw ContractError("too many classes for MEGW");
  io::ByteWriter w;
  w.bytes("MEGW");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.channels()));
  w.u32(static_cast<std::uint32_t>(ds.samples()));
  w.f32(static_cast<float>(ds.sample_rate_hz()));
  w.u16(static_cast<std::uint16_t>(ds.n_classes()));
  for (const auto& name : ds.class_names) w.string16(name);
  for (int l : ds.labels) w.u16(static_cast<std::uint16_t>(l));
  for (const auto& win : ds.windows) {
    for (double v : win.data()) w.f32(static_cast<float>(v));
  }
  return w.data();
}

Dataset decode_dataset(std::string_view bytes, Split split) {
  io::ByteReader r(bytes);
  if (r.bytes(4) != "MEGW") throw FormatError("not a MEGW dataset (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported MEGW version " + std::to_string(version));
  const auto n = r.u32();
  const auto channels = r.u32();
  const auto samples = r.u32();
  const double rate = static_cast<double>(r.f32());
  const auto n_classes = r.u16();
  Dataset ds;
  ds.split = split;
  for (std::uint16_t i = 0; i < n_classes; ++i) ds.class_names.push_back(r.string16());
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.u16();
  if (n > 0 && (channels == 0 || samples == 0)) throw FormatError("MEGW: zero-sized windows");
  const std::size_t per = static_cast<std::size_t>(channels) * samples;
  if (r.remaining() != static_cast<std::size_t>(n) * per * 4) {
    throw FormatError("MEGW: payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(static_cast<std::size_t>(n) * per * 4));
  }
  ds.windows.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> data(per);
    for (auto& v : data) v = static_cast<double>(r.f32());
    ds.windows.emplace_back(channels, samples, rate, std::move(data));
  }
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("MEGW: ") + e.what());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::write_file_atomic(path, encode_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  Split split = Split::test;
  try {
    split = split_from_string(path.stem().string());
  } catch (const ContractError&) {
  }
  return decode_dataset(io::read_file(path), split);
}

Recording concatenate(const Dataset& ds) {
  if (ds.windows.empty()) throw ContractError("concatenate: empty dataset");
  ds.validate();
  const std::size_t C = ds.channels(), S = ds.samples();
  Recording rec;
  rec.signal = MegWindow(C, S * ds.size(), ds.sample_rate_hz());
  rec.labels.reserve(S * ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      auto src = ds.windows[i].channel(c);
      std::copy(src.begin(), src.end(), rec.signal.channel(c).begin() + static_cast<std::ptrdiff_t>(i * S));
    }
    rec.labels.insert(rec.labels.end(), S, ds.labels[i]);
  }
  return rec;
}

ClassWeights compute_class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractError("class weights: no classes");
  std::vector<double> inv(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw ContractError("class weights: class " + std::to_string(c) + " has zero samples");
    }
    inv[c] = 1.0 / std::sqrt(static_cast<double>(counts[c]));
  }
  const double total = std::accumulate(inv.begin(), inv.end(), 0.0);
  const double factor = static_cast<double>(counts.size()) / total;
  ClassWeights out;
  out.weights.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) out.weights[c] = inv[c] * factor;
  return out;
}

double positive_class_weight(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0) throw ContractError("positive class weight: counts must be >= 1");
  return std::sqrt(static_cast<double>(n_neg) / static_cast<double>(n_pos));
}

GroupingPlan make_grouping_plan(std::span<const int> labels, std::size_t group_size,
                                std::uint64_t epoch_seed) {
  if (group_size == 0) throw ContractError("group_size must be >= 1");
  GroupingPlan plan;
  plan.group_size = group_size;
  plan.epoch_seed = epoch_seed;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (auto& [label, idx] : by_class) {
    auto rng = make_rng({epoch_seed, static_cast<std::uint64_t>(label)});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start + group_size <= idx.size(); start += group_size) {
      Group g;
      g.label = label;
      g.members.assign(idx.begin() + static_cast<std::ptrdiff_t>(start),
                       idx.begin() + static_cast<std::ptrdiff_t>(start + group_size));
      plan.groups.push_back(std::move(g));
    }
  }
  return plan;
}

MegWindow average_group(const Dataset& ds, const Group& group) {
  if (group.members.empty()) throw ContractError("average_group: empty group");
  for (auto i : group.members) {
    if (i >= ds.size()) throw ContractError("average_group: index out of range");
    if (ds.labels[i] != group.label) throw ContractError("average_group: mixed labels in group");
  }
  const auto& first = ds.windows[group.members.front()];
  MegWindow out(first.channels(), first.samples(), first.sample_rate_hz());
  auto acc = out.data();
  for (auto i : group.members) {
    auto src = ds.windows[i].data();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k];
  }
  const double inv = 1.0 / static_cast<double>(group.members.size());
  for (double& v : acc) v *= inv;
  return out;
}

Dataset averaged_dataset(const Dataset& ds, const GroupingPlan& plan) {
  Dataset out;
  out.split = ds.split;
  out.class_names = ds.class_names;
  for (const auto& g : plan.groups) {
    out.windows.push_back(average_group(ds, g));
    out.labels.push_back(g.label);
  }
  return out;
}

void FeatureMap::validate(std::size_t n_classes) const {
  if (positive.empty()) throw ContractError("feature '" + name + "': empty positive set");
  for (int c : positive) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
      throw ContractError("feature '" + name + "': class id out of range");
    }
  }
}

std::vector<std::string> feature_names() {
  return {"voicing", "plosive", "fricative", "affricate", "nasal", "liquid", "glide"};
}

std::vector<std::string> default_feature_symbols(const std::string& feature) {
  static const std::map<std::string, std::vector<std::string>> manner = {
      {"plosive", {"P", "B", "T", "D", "K", "G"}},
      {"fricative", {"F", "V", "TH", "DH", "S", "Z", "SH", "ZH", "HH"}},
      {"affricate", {"CH", "JH"}},
      {"nasal", {"M", "N", "NG"}},
      {"liquid", {"L", "R"}},
      {"glide", {"W", "Y"}}};
  if (feature == "voicing") {
    std::vector<std::string> out = {"B", "D", "G", "V", "DH", "Z", "ZH", "JH",
                                    "M", "N", "NG", "L", "R", "W", "Y"};
    for (const char* v : {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW",
                          "OY", "UH", "UW"}) {
      out.emplace_back(v);
    }
    return out;
  }
  auto it = manner.find(feature);
  if (it == manner.end()) throw ContractError("unknown phonetic feature '" + feature + "'");
  return it->second;
}

FeatureMap make_feature_map(const std::string& name, std::span<const std::string> symbols,
                            std::span<const std::string> class_names) {
  FeatureMap fm;
  fm.name = name;
  std::set<int> ids;
  for (const auto& s : symbols) {
    auto it = std::find(class_names.begin(), class_names.end(), s);
    if (it != class_names.end()) ids.insert(static_cast<int>(it - class_names.begin()));
  }
  fm.positive.assign(ids.begin(), ids.end());
  return fm;
}

std::vector<FeatureMap> feature_maps_from_json(const nlohmann::json& doc,
                                               std::span<const std::string> class_names) {
  if (!doc.is_object() || !doc.contains("features") || !doc.at("features").is_object()) {
    throw FormatError("feature map document needs an object field 'features'");
  }
  std::vector<FeatureMap> out;
  for (const auto& [name, symbols] : doc.at("features").items()) {
    if (!symbols.is_array()) throw FormatError("features." + name + " must be an array of symbols");
    std::vector<std::string> syms;
    for (const auto& s : symbols) {
      if (!s.is_string()) throw FormatError("features." + name + " contains a non-string entry");
      syms.push_back(s.get<std::string>());
    }
    out.push_back(make_feature_map(name, syms, class_names));
  }
  return out;
}

nlohmann::json default_feature_document() {
  nlohmann::json doc;
  for (const auto& f : feature_names()) doc["features"][f] = default_feature_symbols(f);
  return doc;
}

Dataset map_to_feature(const Dataset& ds, const FeatureMap& fm) {
  Dataset out;
  out.split = ds.split;
  out.windows = ds.windows;
  out.class_names = {"not_" + fm.name, fm.name};
  const std::set<int> pos(fm.positive.begin(), fm.positive.end());
  out.labels.reserve(ds.labels.size());
  for (int l : ds.labels) out.labels.push_back(pos.count(l) ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------

void GeneratorSpec::validate() const {
  const auto fail = [](const std::string& m) { throw ContractError("generator spec: " + m); };
  if (channels == 0 || samples == 0) fail("channels and samples must be positive");
  if (!(sample_rate_hz > 0.0)) fail("sample_rate_hz must be positive");
  if (snr && !(*snr > 0.0)) fail("snr must be positive");
  if (sessions == 0) fail("sessions must be >= 1");
  if (!(freq_low_hz > 0.0) || !(freq_high_hz > freq_low_hz) || freq_high_hz >= sample_rate_hz / 2.0) {
    fail("frequency range must satisfy 0 < low < high < Nyquist");
  }
  if (sinusoids_per_class == 0) fail("sinusoids_per_class must be >= 1");
  if (task == Task::phoneme) {
    if (n_classes < 2) fail("n_classes must be >= 2");
    if (!class_names.empty() && class_names.size() != n_classes) fail("class_names length != n_classes");
  } else {
    if (segment_samples == 0) fail("segment_samples must be >= 1");
    if (!(speech_fraction > 0.0 && speech_fraction < 1.0)) fail("speech_fraction must be in (0, 1)");
    if (!(mean_speech_segments >= 1.0)) fail("mean_speech_segments must be >= 1");
  }
  if (splits.empty()) fail("at least one split is required");
  std::set<Split> seen;
  for (const auto& s : splits) {
    if (!seen.insert(s.split).second) fail("duplicate split " + to_string(s.split));
    if (task == Task::phoneme && s.counts.size() != n_classes) {
      fail("split " + to_string(s.split) + ": counts needs " + std::to_string(n_classes) + " entries");
    }
    if (task == Task::speech && s.segments == 0) fail("split " + to_string(s.split) + ": segments must be >= 1");
    if (!(s.drift_low > 0.0) || s.drift_high < s.drift_low) {
      fail("split " + to_string(s.split) + ": drift range must satisfy 0 < low <= high");
    }
    if (!s.session_gains.empty() && s.session_gains.size() != sessions) {
      fail("split " + to_string(s.split) + ": session_gains needs one gain per session");
    }
  }
}

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const std::string& path, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    doc.at(key).get_to(out);
  } catch (const nlohmann::json::exception&) {
    throw FormatError("field '" + path + key + "' has the wrong type");
  }
}

}  // namespace

GeneratorSpec generator_spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("generator spec must be a JSON object");
  GeneratorSpec spec;
  std::string task = "phoneme";
  read_field(doc, "", "task", task);
  if (task == "phoneme") spec.task = GeneratorSpec::Task::phoneme;
  else if (task == "speech") spec.task = GeneratorSpec::Task::speech;
  else throw FormatError("field 'task' must be \"phoneme\" or \"speech\"");
  read_field(doc, "", "channels", spec.channels);
  read_field(doc, "", "samples", spec.samples);
  read_field(doc, "", "sample_rate_hz", spec.sample_rate_hz);
  read_field(doc, "", "n_classes", spec.n_classes);
  read_field(doc, "", "class_names", spec.class_names);
  if (doc.contains("snr") && !doc.at("snr").is_null()) {
    double snr = 0.0;
    read_field(doc, "", "snr", snr);
    spec.snr = snr;
  }
  read_field(doc, "", "sinusoids_per_class", spec.sinusoids_per_class);
  if (doc.contains("freq_range_hz")) {
    std::vector<double> r;
    read_field(doc, "", "freq_range_hz", r);
    if (r.size() != 2) throw FormatError("field 'freq_range_hz' must have two entries");
    spec.freq_low_hz = r[0];
    spec.freq_high_hz = r[1];
  }
  read_field(doc, "", "sessions", spec.sessions);
  read_field(doc, "", "segment_samples", spec.segment_samples);
  read_field(doc, "", "speech_fraction", spec.speech_fraction);
  read_field(doc, "", "mean_speech_segments", spec.mean_speech_segments);
  if (spec.task == GeneratorSpec::Task::speech && !doc.contains("samples")) {
    spec.samples = spec.segment_samples;
  }
  if (!doc.contains("splits") || !doc.at("splits").is_array()) {
    throw FormatError("field 'splits' must be an array");
  }
  std::size_t i = 0;
  for (const auto& s : doc.at("splits")) {
    const std::string path = "splits[" + std::to_string(i++) + "].";
    if (!s.is_object()) throw FormatError("field '" + path.substr(0, path.size() - 1) + "' must be an object");
    SplitSpec sp;
    std::string name;
    read_field(s, path, "name", name);
    try {
      sp.split = split_from_string(name);
    } catch (const ContractError&) {
      throw FormatError("field '" + path + "name' must be train|validation|test|holdout");
    }
    read_field(s, path, "counts", sp.counts);
    read_field(s, path, "segments", sp.segments);
    if (s.contains("drift")) {
      std::vector<double> d;
      read_field(s, path, "drift", d);
      if (d.size() != 2) throw FormatError("field '" + path + "drift' must have two entries");
      sp.drift_low = d[0];
      sp.drift_high = d[1];
    }
    read_field(s, path, "session_gains", sp.session_gains);
    spec.splits.push_back(std::move(sp));
  }
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return spec;
}

nlohmann::json to_json(const GeneratorSpec& spec) {
  nlohmann::json doc;
  doc["task"] = spec.task == GeneratorSpec::Task::phoneme ? "phoneme" : "speech";
  doc["channels"] = spec.channels;
  doc["samples"] = spec.samples;
  doc["sample_rate_hz"] = spec.sample_rate_hz;
  doc["n_classes"] = spec.n_classes;
  if (!spec.class_names.empty()) doc["class_names"] = spec.class_names;
  doc["snr"] = spec.snr ? nlohmann::json(*spec.snr) : nlohmann::json(nullptr);
  doc["sinusoids_per_class"] = spec.sinusoids_per_class;
  doc["freq_range_hz"] = {spec.freq_low_hz, spec.freq_high_hz};
  doc["sessions"] = spec.sessions;
  doc["segment_samples"] = spec.segment_samples;
  doc["speech_fraction"] = spec.speech_fraction;
  doc["mean_speech_segments"] = spec.mean_speech_segments;
  doc["splits"] = nlohmann::json::array();
  for (const auto& s : spec.splits) {
    nlohmann::json j{{"name", to_string(s.split)}, {"drift", {s.drift_low, s.drift_high}}};
    if (!s.counts.empty()) j["counts"] = s.counts;
    if (s.segments) j["segments"] = s.segments;
    if (!s.session_gains.empty()) j["session_gains"] = s.session_gains;
    doc["splits"].push_back(j);
  }
  return doc;
}

namespace {

constexpr std::uint64_t kTemplateStream = 0x7e3a1c5b;
constexpr std::uint64_t kSplitStream = 0x51d2e9f3;

// Spatially mixed sinusoid bank, normalized to unit RMS. `phase_time` is
// an absolute sample offset so consecutive segments of a record are continuous.
struct SinusoidBank {
  std::vector<double> freq, phase;
  std::vector<std::vector<double>> mixing;  // [sinusoid][channel]
  double norm = 1.0;

  double value(std::size_t channel, double t_seconds) const {
    double v = 0.0;
    for (std::size_t k = 0; k < freq.size(); ++k) {
      v += mixing[k][channel] * std::sin(2.0 * std::numbers::pi * freq[k] * t_seconds + phase[k]);
    }
    return v * norm;
  }
};

SinusoidBank make_bank(const GeneratorSpec& spec, std::uint64_t seed, std::uint64_t key) {
  auto rng = make_rng({seed, kTemplateStream, key});
  std::uniform_real_distribution<double> freq(spec.freq_low_hz, spec.freq_high_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SinusoidBank bank;
  for (std::size_t k = 0; k < spec.sinusoids_per_class; ++k) {
    bank.freq.push_back(freq(rng));
    bank.phase.push_back(phase(rng));
    std::vector<double> m(spec.channels);
    for (double& x : m) x = gauss(rng);
    bank.mixing.push_back(std::move(m));
  }
  // Unit RMS over one window.
  double acc = 0.0;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    for (std::size_t t = 0; t < spec.samples; ++t) {
      const double v = bank.value(c, static_cast<double>(t) / spec.sample_rate_hz);
      acc += v * v;
    }
  }
  const double rms = std::sqrt(acc / static_cast<double>(spec.channels * spec.samples));
  bank.norm = rms > 0.0 ? 1.0 / rms : 1.0;
  return bank;
}

std::vector<double> session_gains(const SplitSpec& split, std::size_t sessions, std::mt19937_64& rng) {
  if (!split.session_gains.empty()) return split.session_gains;
  std::uniform_real_distribution<double> dist(split.drift_low, split.drift_high);
  std::vector<double> g(sessions);
  for (double& x : g) x = split.drift_low == split.drift_high ? split.drift_low : dist(rng);
  return g;
}

}  // namespace

Dataset synthesize_dataset(const GeneratorSpec& spec, const SplitSpec& split, std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng({seed, kSplitStream, static_cast<std::uint64_t>(split.split)});
  const auto gains = session_gains(split, spec.sessions, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double noise_scale = spec.snr ? 1.0 / *spec.snr : 0.0;
  const double fs = spec.sample_rate_hz;

  Dataset ds;
  ds.split = split.split;

  if (spec.task == GeneratorSpec::Task::phoneme) {
    if (!spec.class_names.empty()) {
      ds.class_names = spec.class_names;
    } else {
      const auto& inv = arpabet_inventory();
      for (std::size_t c = 0; c < spec.n_classes; ++c) {
        ds.class_names.push_back(c < inv.size() ? inv[c] : "C" + std::to_string(c));
      }
    }
    std::vector<SinusoidBank> banks;
    for (std::size_t c = 0; c < spec.n_classes; ++c) banks.push_back(make_bank(spec, seed, c));
    // Class templates are fixed windows.
    std::vector<std::vector<double>> templates;
    for (const auto& bank : banks) {
      std::vector<double> t(spec.channels * spec.samples);
      for (std::size_t c = 0; c < spec.channels; ++c) {
        for (std::size_t s = 0; s < spec.samples; ++s) {
          t[c * spec.samples + s] = bank.value(c, static_cast<double>(s) / fs);
        }
      }
      templates.push_back(std::move(t));
    }
    std::vector<int> labels;
    for (std::size_t c = 0; c < spec.n_classes; ++c) labels.insert(labels.end(), split.counts[c], static_cast<int>(c));
    std::shuffle(labels.begin(), labels.end(), rng);
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) {
      // Sessions are contiguous blocks of the (shuffled) acquisition order.
      const std::size_t session = i * spec.sessions / n;
      const double gain = gains[session];
      const auto& tmpl = templates[static_cast<std::size_t>(labels[i])];
      std::vector<double> data(tmpl.size());
      for (std::size_t k = 0; k < data.size(); ++k) {
        const double noise = noise_scale > 0.0 ? noise_scale * gauss(rng) : 0.0;
        data[k] = gain * (tmpl[k] + noise);
      }
      ds.windows.emplace_back(spec.channels, spec.samples, fs, std::move(data));
      ds.labels.push_back(labels[i]);
    }
    return ds;
  }

  // Speech: one continuous record cut into segments with alternating runs.
  ds.class_names = {"silence", "speech"};
  const SinusoidBank bank = make_bank(spec, seed, 0x5eec4);
  const double p_leave_speech = 1.0 / spec.mean_speech_segments;
  const double mean_silence = spec.mean_speech_segments * (1.0 - spec.speech_fraction) / spec.speech_fraction;
  const double p_leave_silence = 1.0 / std::max(1.0, mean_silence);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  int state = coin(rng) < spec.speech_fraction ? 1 : 0;
  const std::size_t S = spec.segment_samples;
  for (std::size_t i = 0; i < split.segments; ++i) {
    const std::size_t session = i * spec.sessions / split.segments;
    const double gain = gains[session];
    std::vector<double> data(spec.channels * S);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (std::size_t s = 0; s < S; ++s) {
        const double t = static_cast<double>(i * S + s) / fs;
        const double clean = state ? bank.value(c, t) : 0.0;
        const double noise = noise_scale > 0.0 ? noise_scale * gauss(rng) : 0.0;
        data[c * S + s] = gain * (clean + noise);
      }
    }
    ds.windows.emplace_back(spec.channels, S, fs, std::move(data));
    ds.labels.push_back(state);
    const double leave = state ? p_leave_speech : p_leave_silence;
    if (coin(rng) < leave) state = 1 - state;
  }
  return ds;
}

std::map<Split, Dataset> synthesize_splits(const GeneratorSpec& spec, std::uint64_t seed) {
  std::map<Split, Dataset> out;
  for (const auto& s : spec.splits) out.emplace(s.split, synthesize_dataset(spec, s, seed));
  return out;
}

GeneratorSpec desk_phoneme_spec(std::size_t n_classes, std::size_t per_class_train,
                                std::size_t per_class_eval, double snr) {
  GeneratorSpec spec;
  spec.task = GeneratorSpec::Task::phoneme;
  spec.n_classes = n_classes;
  spec.snr = snr;
  SplitSpec train;
  train.split = Split::train;
  train.counts.assign(n_classes, per_class_train);
  SplitSpec val = train;
  val.split = Split::validation;
  val.counts.assign(n_classes, per_class_eval);
  SplitSpec test = val;
  test.split = Split::test;
  spec.splits = {train, val, test};
  return spec;
}

}  // namespace megc::pipeline
