// SPDX-License-Identifier: Apache-2.0
#include "megc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "megc/error.hpp"
#include "megc/rng.hpp"
#include "megc/signal.hpp"

namespace megc::eval {

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------

bool is_bimodal(std::span<const double> density, double trough_ratio) {
  // Collapse plateaus so flat tops count once.
  std::vector<double> d;
  for (double x : density) {
    if (d.empty() || d.back() != x) d.push_back(x);
  }
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool left = i == 0 || d[i] > d[i - 1];
    const bool right = i + 1 == d.size() || d[i] > d[i + 1];
    if (left && right && d[i] > 0.0) peaks.push_back(i);
  }
  for (std::size_t a = 0; a < peaks.size(); ++a) {
    for (std::size_t b = a + 1; b < peaks.size(); ++b) {
      const double lower = std::min(d[peaks[a]], d[peaks[b]]);
      const double trough = *std::min_element(d.begin() + static_cast<std::ptrdiff_t>(peaks[a]),
                                              d.begin() + static_cast<std::ptrdiff_t>(peaks[b]) + 1);
      if (trough < trough_ratio * lower) return true;
    }
  }
  return false;
}

namespace {

struct SplitRms {
  std::string name;
  std::vector<double> rms;
};

std::vector<SplitRms> collect(std::span<const NamedDataset> splits, std::vector<std::string>& warnings) {
  if (splits.empty()) throw ContractError("rms analysis: at least one split is required");
  std::vector<SplitRms> out;
  for (const auto& s : splits) {
    if (!s.dataset || s.dataset->size() == 0) {
      warnings.push_back("split '" + s.name + "' is empty; skipped");
      continue;
    }
    SplitRms r{s.name, {}};
    for (const auto& w : s.dataset->windows) r.rms.push_back(signal::rms_energy(w));
    out.push_back(std::move(r));
  }
  return out;
}

RmsAnalysis analyze(std::vector<SplitRms> data, std::vector<double> edges, std::vector<std::string> warnings) {
  RmsAnalysis out;
  out.edges = std::move(edges);
  out.warnings = std::move(warnings);
  const std::size_t bins = out.edges.size() - 1;
  for (auto& s : data) {
    RmsSplitSummary sum;
    sum.name = s.name;
    sum.n = s.rms.size();
    sum.mean = mean_of(s.rms);
    double var = 0.0;
    for (double x : s.rms) var += (x - sum.mean) * (x - sum.mean);
    sum.std = std::sqrt(var / static_cast<double>(s.rms.size()));
    std::vector<std::size_t> counts(bins, 0);
    std::size_t inside = 0;
    for (double x : s.rms) {
      if (x < out.edges.front() || x > out.edges.back()) continue;
      auto it = std::upper_bound(out.edges.begin(), out.edges.end(), x);
      std::size_t b = static_cast<std::size_t>(it - out.edges.begin());
      b = b == 0 ? 0 : std::min(b - 1, bins - 1);
      ++counts[b];
      ++inside;
    }
    if (inside < s.rms.size()) {
      out.warnings.push_back("split '" + s.name + "': " + std::to_string(s.rms.size() - inside) +
                             " windows outside the bin range");
    }
    sum.density.resize(bins, 0.0);
    for (std::size_t b = 0; b < bins && inside; ++b) {
      sum.density[b] = static_cast<double>(counts[b]) /
                       (static_cast<double>(inside) * (out.edges[b + 1] - out.edges[b]));
    }
    sum.bimodal = is_bimodal(sum.density);
    out.splits.push_back(std::move(sum));
  }
  return out;
}

}  // namespace

RmsAnalysis rms_split_analysis(std::span<const NamedDataset> splits, std::size_t bins) {
  if (bins == 0) throw ContractError("rms analysis: bins must be >= 1");
  std::vector<std::string> warnings;
  auto data = collect(splits, warnings);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& s : data) {
    for (double x : s.rms) {
      lo = first ? x : std::min(lo, x);
      hi = first ? x : std::max(hi, x);
      first = false;
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return analyze(std::move(data), std::move(edges), std::move(warnings));
}

RmsAnalysis rms_split_analysis(std::span<const NamedDataset> splits, std::vector<double> edges) {
  if (edges.size() < 2) throw ContractError("rms analysis: need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw ContractError("rms analysis: bin edges must ascend");
  }
  std::vector<std::string> warnings;
  auto data = collect(splits, warnings);
  return analyze(std::move(data), std::move(edges), std::move(warnings));
}

std::string RmsAnalysis::csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "bin_left,bin_right";
  for (const auto& s : splits) os << ',' << s.name;
  os << '\n';
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    os << edges[b] << ',' << edges[b + 1];
    for (const auto& s : splits) os << ',' << s.density[b];
    os << '\n';
  }
  return os.str();
}

nlohmann::json RmsAnalysis::summary() const {
  nlohmann::json j;
  j["edges"] = edges;
  j["splits"] = nlohmann::json::array();
  for (const auto& s : splits) {
    j["splits"].push_back({{"name", s.name}, {"n", s.n}, {"mean", s.mean}, {"std", s.std}, {"bimodal", s.bimodal}});
  }
  j["warnings"] = warnings;
  return j;
}

// ---------------------------------------------------------------------------

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mean, 100.0 * std);
  return buf;
}

AblationTable ablation_compare(const std::vector<std::pair<std::string, std::vector<double>>>& variants,
                               const std::string& baseline_name) {
  auto base_it = std::find_if(variants.begin(), variants.end(),
                              [&](const auto& v) { return v.first == baseline_name; });
  if (base_it == variants.end()) throw ContractError("ablation: no baseline named '" + baseline_name + "'");
  const auto& base = base_it->second;
  for (const auto& [name, scores] : variants) {
    if (scores.size() != base.size()) {
      throw ContractError("ablation: variant '" + name + "' has " + std::to_string(scores.size()) +
                          " seeds, baseline has " + std::to_string(base.size()));
    }
  }
  if (base.empty()) throw ContractError("ablation: no seed scores");
  const double base_mean = mean_of(base);
  AblationTable table;
  auto make = [&](const std::string& name, const std::vector<double>& scores) {
    AblationRow r;
    r.name = name;
    r.scores = scores;
    r.mean = mean_of(scores);
    r.std = sample_std(scores);
    r.delta = r.mean - base_mean;
    r.relative = base_mean != 0.0 ? r.delta / base_mean : 0.0;
    return r;
  };
  auto baseline = make(baseline_name, base);
  baseline.note = "baseline";
  table.rows.push_back(std::move(baseline));
  for (const auto& [name, scores] : variants) {
    if (name == baseline_name) continue;
    auto r = make(name, scores);
    try {
      r.test = wilcoxon_signed_rank(scores, base, WilcoxonMode::paired_two_sided);
      r.significant = r.test->p_value <= kSignificance;
    } catch (const UndefinedTestError&) {
      r.note = "no difference";
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string AblationTable::text() const {
  std::size_t name_w = 7;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-15s  %8s  %8s  %9s\n", static_cast<int>(name_w), "variant", "F1-macro",
                "delta", "W", "p");
  os << buf;
  for (const auto& r : rows) {
    const std::string score = format_mean_std(r.mean, r.std) + (r.significant ? "*" : "");
    std::string w = "-", p = r.note.empty() ? "-" : r.note;
    if (r.test) {
      std::snprintf(buf, sizeof buf, "%.1f", r.test->statistic);
      w = buf;
      std::snprintf(buf, sizeof buf, "%.3g", r.test->p_value);
      p = buf;
    }
    // The "±" is two bytes in UTF-8; pad by display width.
    std::snprintf(buf, sizeof buf, "%-*s  %-16s  %+8.2f  %8s  %9s\n", static_cast<int>(name_w), r.name.c_str(),
                  score.c_str(), 100.0 * r.delta, w.c_str(), p.c_str());
    os << buf;
  }
  return os.str();
}

std::string AblationTable::csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "variant,mean,std,delta,relative_delta,statistic,p_value,significant\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.mean << ',' << r.std << ',' << r.delta << ',' << r.relative << ',';
    if (r.test) os << r.test->statistic << ',' << r.test->p_value;
    else os << ',';
    os << ',' << (r.significant ? 1 : 0) << '\n';
  }
  return os.str();
}

nlohmann::json AblationTable::json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json e{{"name", r.name},       {"scores", r.scores},           {"mean", r.mean},
                     {"std", r.std},         {"delta", r.delta},             {"relative_delta", r.relative},
                     {"significant", r.significant}, {"display", format_mean_std(r.mean, r.std)}};
    if (r.test) {
      e["wilcoxon"] = {{"statistic", r.test->statistic},
                       {"p_value", r.test->p_value},
                       {"n_effective", r.test->n_effective},
                       {"mode", to_string(r.test->mode)}};
    }
    if (!r.note.empty()) e["note"] = r.note;
    j.push_back(e);
  }
  return j;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> nested_subset(std::span<const int> labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("nested_subset: fraction must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> out;
  for (auto& [label, idx] : by_class) {
    auto rng = make_rng({seed, 0x5b5e7, static_cast<std::uint64_t>(label)});
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(keep, idx.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SweepCurve data_size_sweep(std::span<const double> fractions, const pipeline::Dataset& train,
                           std::span<const std::uint64_t> seeds,
                           const std::function<double(const pipeline::Dataset&, std::uint64_t)>& run) {
  if (fractions.empty()) throw ContractError("sweep: no fractions");
  if (seeds.empty()) throw ContractError("sweep: no seeds");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw ContractError("sweep: fractions must lie in (0, 1]");
    if (i && !(fractions[i] > fractions[i - 1])) throw ContractError("sweep: fractions must ascend");
  }
  SweepCurve curve;
  for (double f : fractions) {
    SweepPoint pt;
    pt.fraction = f;
    bool skipped = false;
    for (auto seed : seeds) {
      const auto idx = nested_subset(train.labels, f, seed);
      if (idx.empty()) {
        skipped = true;
        break;
      }
      pt.n_samples = idx.size();
      pt.scores.push_back(run(train.subset(idx), seed));
    }
    if (skipped) {
      curve.warnings.push_back("fraction " + std::to_string(f) + " yields no training samples; skipped");
      continue;
    }
    pt.mean = mean_of(pt.scores);
    pt.std = sample_std(pt.scores);
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

std::string SweepCurve::csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "fraction,n_samples,mean,std\n";
  for (const auto& p : points) os << p.fraction << ',' << p.n_samples << ',' << p.mean << ',' << p.std << '\n';
  return os.str();
}

nlohmann::json SweepCurve::json() const {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : points) {
    j["points"].push_back(
        {{"fraction", p.fraction}, {"n_samples", p.n_samples}, {"scores", p.scores}, {"mean", p.mean}, {"std", p.std}});
  }
  j["warnings"] = warnings;
  return j;
}

}  // namespace megc::eval
