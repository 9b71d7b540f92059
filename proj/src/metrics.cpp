// SPDX-License-Identifier: Apache-2.0
#include "megc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "megc/error.hpp"

namespace megc::eval {

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["n_classes"] = r.n_classes;
  j["n_samples"] = r.n_samples;
  j["f1_macro"] = r.f1_macro;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["accuracy"] = r.accuracy;
  j["f1_pos"] = r.f1_pos ? nlohmann::json(*r.f1_pos) : nlohmann::json(nullptr);
  j["jaccard"] = r.jaccard ? nlohmann::json(*r.jaccard) : nlohmann::json(nullptr);
  j["auroc_macro"] = r.auroc_macro ? nlohmann::json(*r.auroc_macro) : nlohmann::json(nullptr);
  j["confusion"] = r.confusion;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    per.push_back({{"support", c.support},
                   {"precision", c.precision},
                   {"recall", c.recall},
                   {"f1", c.f1}});
  }
  j["per_class"] = per;
  return j;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_labels(std::span<const int> y, std::size_t n_classes, const char* what) {
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= n_classes) {
      throw ContractError(std::string(what) + " label " + std::to_string(v) + " outside [0, " +
                          std::to_string(n_classes) + ")");
    }
  }
}

}  // namespace

MetricReport confusion_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                               std::size_t n_classes, AbsentClassPolicy policy) {
  if (y_true.size() != y_pred.size()) {
    throw ContractError("confusion_metrics: " + std::to_string(y_true.size()) + " targets vs " +
                        std::to_string(y_pred.size()) + " predictions");
  }
  if (n_classes == 0) throw ContractError("confusion_metrics: n_classes must be >= 1");
  check_labels(y_true, n_classes, "true");
  check_labels(y_pred, n_classes, "predicted");

  MetricReport r;
  r.n_classes = n_classes;
  r.n_samples = y_true.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  r.per_class.resize(n_classes);
  std::size_t correct = 0;
  double f1_sum = 0.0, recall_sum = 0.0;
  std::size_t f1_n = 0, recall_n = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& s = r.per_class[c];
    s.tp = r.confusion[c][c];
    for (std::size_t k = 0; k < n_classes; ++k) {
      s.support += r.confusion[c][k];
      s.predicted += r.confusion[k][c];
    }
    s.fn = s.support - s.tp;
    s.fp = s.predicted - s.tp;
    s.precision = ratio(s.tp, s.predicted);
    s.recall = ratio(s.tp, s.support);
    s.f1 = ratio(2 * s.tp, 2 * s.tp + s.fp + s.fn);
    correct += s.tp;
    const bool absent = s.support == 0 && s.predicted == 0;
    if (!absent || policy == AbsentClassPolicy::count_zero) {
      f1_sum += s.f1;
      ++f1_n;
    }
    if (s.support > 0 || policy == AbsentClassPolicy::count_zero) {
      recall_sum += s.recall;
      ++recall_n;
    }
  }
  r.f1_macro = f1_n ? f1_sum / static_cast<double>(f1_n) : 0.0;
  r.balanced_accuracy = recall_n ? recall_sum / static_cast<double>(recall_n) : 0.0;
  r.accuracy = ratio(correct, r.n_samples);
  if (n_classes == 2) {
    const auto& pos = r.per_class[1];
    r.f1_pos = pos.f1;
    r.jaccard = ratio(pos.tp, pos.tp + pos.fp + pos.fn);
  }
  return r;
}

double auroc_binary(std::span<const int> positive, std::span<const double> scores) {
  if (positive.size() != scores.size()) throw ContractError("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based).
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      rank_sum += rank[i];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auroc: needs both positives and negatives");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auroc_macro(std::span<const int> y_true, const std::vector<std::vector<double>>& scores,
                   std::size_t n_classes) {
  if (y_true.size() != scores.size()) throw ContractError("auroc_macro: length mismatch");
  check_labels(y_true, n_classes, "true");
  const bool single = !scores.empty() && scores.front().size() == 1;
  if (single && n_classes != 2) throw ContractError("auroc_macro: single score column needs a binary task");
  for (const auto& row : scores) {
    if (row.size() != (single ? 1 : n_classes)) throw ContractError("auroc_macro: ragged score matrix");
  }
  std::vector<int> pos(y_true.size());
  std::vector<double> col(y_true.size());
  if (single || scores.empty()) {
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      pos[i] = y_true[i] == 1;
      col[i] = scores[i][0];
    }
    return auroc_binary(pos, col);
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      pos[i] = y_true[i] == static_cast<int>(c);
      n_pos += static_cast<std::size_t>(pos[i]);
      col[i] = scores[i][c];
    }
    if (n_pos == 0 || n_pos == y_true.size()) continue;
    sum += auroc_binary(pos, col);
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("auroc_macro: no class has both positives and negatives");
  return sum / static_cast<double>(used);
}

std::vector<int> argmax_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
  }
  return out;
}

std::string to_string(WilcoxonMode m) {
  return m == WilcoxonMode::paired_two_sided ? "paired-two-sided" : "one-sample-greater";
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

WilcoxonResult signed_rank(std::vector<double> d, WilcoxonMode mode) {
  std::erase(d, 0.0);
  const std::size_t n = d.size();
  if (n == 0) throw UndefinedTestError("wilcoxon: all differences are zero");
  for (double v : d) {
    if (!std::isfinite(v)) throw NumericError("wilcoxon: non-finite difference");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled midranks: ranks i..j (1-based) share (i + j) / 2.
  std::vector<std::uint32_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto r = static_cast<std::uint32_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::uint64_t w_plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w_plus2 += rank2[i];
  }
  const std::uint64_t w_minus2 = total2 - w_plus2;

  WilcoxonResult res;
  res.mode = mode;
  res.n_effective = n;
  const std::uint64_t stat2 = mode == WilcoxonMode::paired_two_sided ? std::min(w_plus2, w_minus2) : w_plus2;
  res.statistic = static_cast<double>(stat2) / 2.0;

  if (n <= kWilcoxonExactMax) {
    // Null distribution of 2*W+ over all 2^n sign assignments.
    std::vector<std::uint64_t> count(total2 + 1, 0);
    count[0] = 1;
    std::uint64_t reach = 0;
    for (auto r : rank2) {
      for (std::uint64_t s = reach + 1; s-- > 0;) {
        if (count[s]) count[s + r] += count[s];
      }
      reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    std::uint64_t tail = 0;
    if (mode == WilcoxonMode::paired_two_sided) {
      for (std::uint64_t s = 0; s <= stat2; ++s) tail += count[s];
      res.p_value = std::min(1.0, 2.0 * static_cast<double>(tail) / all);
    } else {
      for (std::uint64_t s = stat2; s <= total2; ++s) tail += count[s];
      res.p_value = static_cast<double>(tail) / all;
    }
    res.exact = true;
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double sd = std::sqrt(nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0);
  res.exact = false;
  if (mode == WilcoxonMode::paired_two_sided) {
    const double z = std::min(0.0, res.statistic - mean + 0.5) / sd;
    res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  } else {
    const double z = (res.statistic - mean - 0.5) / sd;
    res.p_value = 1.0 - normal_cdf(z);
  }
  return res;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMode mode) {
  if (a.size() != b.size()) {
    throw ContractError("wilcoxon: paired samples differ in length (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return signed_rank(std::move(d), mode);
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, double mu, WilcoxonMode mode) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - mu;
  return signed_rank(std::move(d), mode);
}

}  // namespace megc::eval
