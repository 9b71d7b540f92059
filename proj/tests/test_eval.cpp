// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "megc/analysis.hpp"
#include "megc/error.hpp"
#include "megc/metrics.hpp"
#include "megc/rng.hpp"

using namespace megc;
using namespace megc::eval;

namespace {

pipeline::Dataset constant_windows(const std::vector<double>& levels) {
  pipeline::Dataset ds;
  ds.class_names = {"a"};
  for (double v : levels) {
    ds.windows.emplace_back(2, 10, 250.0, std::vector<double>(20, v));
    ds.labels.push_back(0);
  }
  return ds;
}

}  // namespace

TEST_CASE("confusion metrics agree with brute force") {
  auto rng = make_rng({51});
  for (int trial = 0; trial < 1000; ++trial) {
    const auto C = static_cast<int>(test::uniform_size(rng, 1, 10));
    const auto n = test::uniform_size(rng, 1, 200);
    // Skewed labels so absent classes show up.
    const auto hi = test::uniform_size(rng, 0, static_cast<std::size_t>(C - 1));
    std::vector<int> t(n), p(n);
    for (auto& v : t) v = static_cast<int>(test::uniform_size(rng, 0, hi));
    for (auto& v : p) v = static_cast<int>(test::uniform_size(rng, 0, hi));
    const bool zero = trial % 2;
    const auto r = confusion_metrics(t, p, static_cast<std::size_t>(C),
                                     zero ? AbsentClassPolicy::count_zero : AbsentClassPolicy::exclude);
    const auto b = test::brute_metrics(t, p, C, zero);
    CHECK(r.f1_macro == doctest::Approx(b.f1_macro).epsilon(1e-12));
    CHECK(r.balanced_accuracy == doctest::Approx(b.balanced).epsilon(1e-12));
    CHECK(r.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
    CHECK(r.confusion == b.confusion);
  }
}

TEST_CASE("metric hand cases") {
  // One of three classes right: F1 per class (1, 0, 0).
  const std::vector<int> t{0, 1, 2}, p{0, 2, 1};
  CHECK(confusion_metrics(t, p, 3).f1_macro == doctest::Approx(1.0 / 3.0));
  CHECK(confusion_metrics(t, p, 3).accuracy == doctest::Approx(1.0 / 3.0));

  const std::vector<int> bt{1, 1, 0, 0}, bp{1, 0, 1, 0};
  const auto r = confusion_metrics(bt, bp, 2);
  REQUIRE(r.jaccard);
  CHECK(*r.jaccard == doctest::Approx(1.0 / 3.0));
  CHECK(*r.f1_pos == doctest::Approx(0.5));
  const std::vector<int> ct{1, 1, 0}, cp{1, 0, 0};
  CHECK(*confusion_metrics(ct, cp, 2).jaccard == doctest::Approx(0.5));

  // Absent class 2 of 3 counts only under count_zero.
  const std::vector<int> at{0, 1}, ap{0, 1};
  CHECK(confusion_metrics(at, ap, 3).f1_macro == 1.0);
  CHECK(confusion_metrics(at, ap, 3, AbsentClassPolicy::count_zero).f1_macro == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(confusion_metrics(at, std::vector<int>{0}, 2), ContractError);
  CHECK_THROWS_AS(confusion_metrics(at, std::vector<int>{0, 5}, 2), ContractError);
  CHECK(argmax_rows({{0.1, 0.9}, {0.5, 0.5}, {2.0, 1.0}}) == std::vector<int>{1, 0, 0});
}

TEST_CASE("AUROC by the pair-counting definition") {
  CHECK(auroc_binary(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.9, 0.8, 0.4, 0.1}) ==
        doctest::Approx(0.75));
  CHECK(auroc_binary(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 0.5);
  CHECK_THROWS_AS(auroc_binary(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), UndefinedMetricError);

  auto rng = make_rng({52});
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = test::uniform_size(rng, 2, 80);
    std::vector<int> pos(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = static_cast<int>(i % 2);
      s[i] = static_cast<double>(test::uniform_size(rng, 0, 12)) / 4.0;  // ties on purpose
    }
    std::shuffle(pos.begin(), pos.end(), rng);
    CHECK(auroc_binary(pos, s) == doctest::Approx(test::pair_auroc(pos, s)).epsilon(1e-12));
  }

  // Macro one-vs-rest skips a class without positives.
  const std::vector<int> y{0, 1, 0, 1};
  const std::vector<std::vector<double>> scores{{0.9, 0.1, 0.0}, {0.2, 0.8, 0.0}, {0.6, 0.4, 0.0}, {0.3, 0.7, 0.0}};
  CHECK(auroc_macro(y, scores, 3) == doctest::Approx(1.0));
}

TEST_CASE("Wilcoxon matches exhaustive enumeration") {
  const std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto all_pos = wilcoxon_signed_rank(ten, 0.0, WilcoxonMode::paired_two_sided);
  CHECK(all_pos.statistic == 0.0);
  CHECK(all_pos.p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
  const auto greater = wilcoxon_signed_rank(ten, 0.0, WilcoxonMode::one_sample_greater);
  CHECK(greater.statistic == 55.0);
  CHECK(greater.p_value == doctest::Approx(1.0 / 1024.0).epsilon(1e-12));
  const std::vector<double> five{0.1, 0.2, 0.3, 0.4, 0.5};
  CHECK(wilcoxon_signed_rank(five, 0.0, WilcoxonMode::paired_two_sided).p_value == doctest::Approx(0.0625));
  CHECK(wilcoxon_signed_rank(five, 0.0).p_value == doctest::Approx(1.0 / 32.0));

  const std::vector<double> zeros(6, 0.0);
  CHECK_THROWS_AS(wilcoxon_signed_rank(zeros, 0.0), UndefinedTestError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(ten, std::vector<double>{1.0}), ContractError);

  auto rng = make_rng({53});
  for (int trial = 0; trial < 400; ++trial) {
    const auto n = test::uniform_size(rng, 1, 14);
    std::vector<double> a(n), b(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(test::uniform_size(rng, 0, 8));
      b[i] = static_cast<double>(test::uniform_size(rng, 0, 8));
      d[i] = a[i] - b[i];
    }
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) continue;
    const auto [two, one] = test::enumerate_wilcoxon(d);
    CHECK(wilcoxon_signed_rank(a, b).p_value == doctest::Approx(two).epsilon(1e-12));
    CHECK(wilcoxon_signed_rank(a, b, WilcoxonMode::one_sample_greater).p_value == doctest::Approx(one).epsilon(1e-12));
  }

  // Above the exact limit the normal approximation stays close to it.
  std::vector<double> big(30);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<double>(i) - 8.5;
  const auto approx = wilcoxon_signed_rank(big, 0.0, WilcoxonMode::paired_two_sided);
  CHECK_FALSE(approx.exact);
  CHECK(approx.n_effective == 30);
  CHECK(approx.p_value > 0.0);
  CHECK(approx.p_value < 0.05);
}

TEST_CASE("RMS analysis flags a bimodal split") {
  std::vector<double> mix(100, 1.0);
  mix.insert(mix.end(), 100, 3.0);
  const auto a = constant_windows(mix);
  const auto b = constant_windows(std::vector<double>(200, 2.0));
  const std::vector<NamedDataset> splits{{"test", &a}, {"train", &b}};
  const auto r = rms_split_analysis(splits, 10);
  REQUIRE(r.splits.size() == 2);
  CHECK(r.splits[0].bimodal);
  CHECK_FALSE(r.splits[1].bimodal);
  CHECK(r.splits[0].mean == doctest::Approx(2.0));
  CHECK(r.splits[0].std == doctest::Approx(1.0));  // population
  CHECK(r.splits[1].std == 0.0);
  for (const auto& s : r.splits) {
    double integral = 0.0;
    for (std::size_t i = 0; i < s.density.size(); ++i) integral += s.density[i] * (r.edges[i + 1] - r.edges[i]);
    CHECK(integral == doctest::Approx(1.0));
  }
  const auto csv = r.csv();
  CHECK(csv.rfind("bin_left,bin_right,test,train\n", 0) == 0);

  const pipeline::Dataset empty;
  const std::vector<NamedDataset> with_empty{{"train", &b}, {"holdout", &empty}};
  const auto w = rms_split_analysis(with_empty, 5);
  CHECK(w.splits.size() == 1);
  CHECK(w.warnings.size() == 1);

  CHECK(is_bimodal(std::vector<double>{1, 5, 1, 5, 1}));
  CHECK_FALSE(is_bimodal(std::vector<double>{1, 5, 4, 5, 1}));
  CHECK_FALSE(is_bimodal(std::vector<double>{0, 1, 2, 3, 2, 1}));
}

TEST_CASE("ablation comparison") {
  std::vector<double> base, better, same;
  for (int i = 0; i < 10; ++i) {
    base.push_back(0.80 + 0.001 * i);
    better.push_back(0.85 + 0.002 * i);
  }
  same = base;
  const auto t = ablation_compare({{"full", base}, {"variant", better}, {"copy", same}}, "full");
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].name == "full");
  CHECK(t.rows[0].note == "baseline");
  CHECK_FALSE(t.rows[0].test);
  REQUIRE(t.rows[1].test);
  CHECK(t.rows[1].test->p_value == doctest::Approx(2.0 / 1024.0));
  CHECK(t.rows[1].significant);
  CHECK(t.rows[1].delta == doctest::Approx(mean_of(better) - mean_of(base)));
  CHECK(t.rows[2].note == "no difference");
  CHECK_FALSE(t.rows[2].significant);
  CHECK(t.text().find("*") != std::string::npos);
  CHECK(format_mean_std(0.87591, 0.00704) == "87.59 ± 0.70");
  CHECK(sample_std(std::vector<double>{1.0, 3.0}) == doctest::Approx(std::sqrt(2.0)));

  CHECK_THROWS_AS(ablation_compare({{"full", base}, {"short", {0.5}}}, "full"), ContractError);
  CHECK_THROWS_AS(ablation_compare({{"a", base}}, "missing"), ContractError);
}

TEST_CASE("nested subsets nest and stay stratified") {
  auto rng = make_rng({54});
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = test::uniform_size(rng, 10, 300);
    const auto C = test::uniform_size(rng, 1, 6);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(test::uniform_size(rng, 0, C - 1));
    std::vector<std::size_t> counts(C, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    const std::uint64_t seed = rng();
    std::set<std::size_t> previous;
    for (double f : {0.1, 0.25, 0.5, 1.0}) {
      const auto idx = nested_subset(labels, f, seed);
      const std::set<std::size_t> cur(idx.begin(), idx.end());
      CHECK(cur.size() == idx.size());
      CHECK(std::includes(cur.begin(), cur.end(), previous.begin(), previous.end()));
      std::vector<std::size_t> got(C, 0);
      for (auto i : idx) ++got[static_cast<std::size_t>(labels[i])];
      for (std::size_t c = 0; c < C; ++c) {
        CHECK(got[c] == static_cast<std::size_t>(std::floor(f * static_cast<double>(counts[c]))));
      }
      previous = cur;
    }
    CHECK(previous.size() == n);
  }
}

TEST_CASE("data-size sweep runs every fraction and seed") {
  pipeline::Dataset train;
  train.class_names = {"a", "b"};
  for (int i = 0; i < 40; ++i) {
    train.windows.emplace_back(1, 4, 250.0);
    train.labels.push_back(i % 2);
  }
  const std::vector<double> fractions{0.01, 0.25, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t calls = 0;
  const auto curve = data_size_sweep(fractions, train, seeds, [&](const pipeline::Dataset& d, std::uint64_t) {
    ++calls;
    return static_cast<double>(d.size()) / 40.0;
  });
  CHECK(calls == 9);
  REQUIRE(curve.points.size() == 3);
  CHECK(curve.warnings.size() == 1);
  CHECK(curve.points[0].n_samples == 10);
  CHECK(curve.points[2].mean == 1.0);
  CHECK(curve.points[1].std == 0.0);
  CHECK(curve.csv().rfind("fraction,n_samples,mean,std\n", 0) == 0);
  const std::vector<double> bad{0.5, 0.25};
  CHECK_THROWS_AS(data_size_sweep(bad, train, seeds, [](const pipeline::Dataset&, std::uint64_t) { return 0.0; }),
                  ContractError);
}
