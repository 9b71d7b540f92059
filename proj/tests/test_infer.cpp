// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "megc/error.hpp"
#include "megc/infer.hpp"
#include "megc/rng.hpp"

using namespace megc;
using namespace megc::infer;

namespace {

class ConstantClassifier final : public WindowClassifier {
 public:
  explicit ConstantClassifier(std::vector<double> row) : row_(std::move(row)) {}
  std::size_t output_dim() const override { return row_.size(); }
  std::vector<std::vector<double>> logits(std::span<const MegWindow> windows) const override {
    return std::vector<std::vector<double>>(windows.size(), row_);
  }

 private:
  std::vector<double> row_;
};

// Reads the class id stored in sample (0, 0) and votes for it, or for the
// next class when adversarial.
class OracleClassifier final : public WindowClassifier {
 public:
  OracleClassifier(std::size_t classes, bool adversarial) : classes_(classes), shift_(adversarial ? 1 : 0) {}
  std::size_t output_dim() const override { return classes_; }
  std::vector<std::vector<double>> logits(std::span<const MegWindow> windows) const override {
    std::vector<std::vector<double>> out;
    for (const auto& w : windows) {
      std::vector<double> row(classes_, 0.0);
      row[(static_cast<std::size_t>(w.at(0, 0)) + shift_) % classes_] = 5.0;
      out.push_back(row);
    }
    return out;
  }

 private:
  std::size_t classes_, shift_;
};

// Single logit from the center sample of channel 0: speech when it is 1.
class CenterClassifier final : public WindowClassifier {
 public:
  std::size_t output_dim() const override { return 1; }
  std::vector<std::vector<double>> logits(std::span<const MegWindow> windows) const override {
    std::vector<std::vector<double>> out;
    for (const auto& w : windows) out.push_back({w.at(0, w.samples() / 2) > 0.5 ? 8.0 : -8.0});
    return out;
  }
};

}  // namespace

TEST_CASE("smoothing removes short speech runs") {
  std::vector<int> short_run{0};
  short_run.insert(short_run.end(), 59, 1);
  short_run.push_back(0);
  CHECK(smooth_runs(short_run, 60) == std::vector<int>(61, 0));
  std::vector<int> long_run{0};
  long_run.insert(long_run.end(), 60, 1);
  long_run.push_back(0);
  CHECK(smooth_runs(long_run, 60) == long_run);
  CHECK(smooth_runs(std::vector<int>{}, 60).empty());
  CHECK(smooth_runs(std::vector<int>{1, 1, 0, 1}, 1) == std::vector<int>{1, 1, 0, 1});
  CHECK_THROWS_AS(smooth_runs(std::vector<int>{1}, 0), ContractError);
}

TEST_CASE("smoothing properties on random label sequences") {
  auto rng = make_rng({41});
  std::bernoulli_distribution flip(0.03);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto n = test::uniform_size(rng, 0, 400);
    std::vector<int> x(n);
    int cur = static_cast<int>(trial % 2);
    for (auto& v : x) {
      if (flip(rng)) cur = 1 - cur;
      v = cur;
    }
    const std::size_t min_run = trial % 3 == 0 ? 60 : test::uniform_size(rng, 1, 80);
    const auto y = smooth_runs(x, min_run);
    REQUIRE(y.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] <= x[i]);  // only ones are zeroed
    for (auto len : test::positive_runs(y)) CHECK(len >= min_run);
    // Input runs long enough survive whole.
    for (std::size_t i = 0; i < n;) {
      if (x[i] != 1) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && x[j] == 1) ++j;
      const bool keep = j - i >= min_run;
      for (std::size_t k = i; k < j; ++k) CHECK(y[k] == (keep ? 1 : 0));
      i = j;
    }
    CHECK(smooth_runs(y, min_run) == y);
  }
}

TEST_CASE("center label and sample expansion") {
  const std::vector<int> labels{0, 0, 1, 1, 1, 0, 0};
  CHECK(center_label(labels, 0, 4) == 1);  // sample 2
  CHECK(center_label(labels, 3, 3) == 1);  // sample 4
  CHECK(center_label(labels, 4, 3) == 0);  // sample 5
  CHECK_THROWS_AS(center_label(labels, 5, 4), ContractError);

  auto rng = make_rng({42});
  for (int trial = 0; trial < 500; ++trial) {
    PredictionTrack t;
    t.window = test::uniform_size(rng, 1, 30);
    t.stride = test::uniform_size(rng, 1, 12);
    t.series_length = t.window + test::uniform_size(rng, 0, 100);
    t.sample_rate_hz = 250.0;
    for (std::size_t off = 0; off + t.window <= t.series_length; off += t.stride) {
      t.offsets.push_back(off);
      const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      t.probabilities.push_back(p);
      t.labels.push_back(p >= 0.5 ? 1 : 0);
    }
    const auto y = expand_to_samples(t);
    const auto q = expand_probabilities(t);
    REQUIRE(y.size() == t.series_length);
    REQUIRE(q.size() == t.series_length);
    for (std::size_t s = 0; s < t.series_length; ++s) {
      std::size_t best = 0;
      double dist = 1e300;
      for (std::size_t i = 0; i < t.offsets.size(); ++i) {
        const double d = std::abs(static_cast<double>(s) - static_cast<double>(t.offsets[i] + t.window / 2));
        if (d < dist) {
          dist = d;
          best = i;
        }
      }
      CHECK(y[s] == t.labels[best]);
      CHECK(q[s] == t.probabilities[best]);
    }
  }
}

TEST_CASE("prediction track covers every window position") {
  const ConstantClassifier zero({0.0});
  const MegWindow series(3, 200, 250.0);
  const auto t = predict_track(zero, series, 50, 1);
  CHECK(t.probabilities.size() == 151);
  CHECK(t.offsets.back() == 150);
  for (double p : t.probabilities) CHECK(p == 0.5);
  for (int l : t.labels) CHECK(l == 1);
  CHECK(predict_track(zero, series, 50, 7).probabilities.size() == (200 - 50) / 7 + 1);
  CHECK(predict_track(zero, MegWindow(3, 40, 250.0), 50, 1).probabilities.empty());
  const ConstantClassifier multi({0.0, 1.0});
  CHECK_THROWS_AS(predict_track(multi, series, 50, 1), ContractError);
}

TEST_CASE("majority vote rules") {
  const std::vector<double> a{0.7, 0.2, 0.1}, b{0.2, 0.7, 0.1}, c{0.1, 0.2, 0.7};
  const auto v = majority_vote({a, a, a, b, c});
  CHECK(v.label == 0);
  CHECK(v.member_votes == std::vector<int>{0, 0, 0, 1, 2});
  // Two votes each for classes 1 and 2; class 2 holds more summed probability.
  const std::vector<double> m1{0.1, 0.8, 0.1}, m2{0.0, 0.05, 0.95};
  CHECK(majority_vote({m1, m1, m2, m2}).label == 2);
  // Equal votes and equal mass: the lower class id.
  CHECK(majority_vote({std::vector<double>{0.4, 0.6}, std::vector<double>{0.6, 0.4}}).label == 0);
  CHECK(majority_vote({b}).label == 1);
}

TEST_CASE("ensemble outvotes a minority of adversarial members") {
  const std::size_t C = 5;
  pipeline::Dataset ds;
  for (std::size_t c = 0; c < C; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < 50; ++i) {
    MegWindow w(2, 8, 250.0);
    w.at(0, 0) = static_cast<double>(i % C);
    ds.windows.push_back(w);
    ds.labels.push_back(static_cast<int>(i % C));
  }
  Ensemble e;
  for (int i = 0; i < 3; ++i) e.members.push_back(std::make_shared<OracleClassifier>(C, false));
  for (int i = 0; i < 2; ++i) e.members.push_back(std::make_shared<OracleClassifier>(C, true));
  const auto p = evaluate_holdout_protocol(e, ds);
  CHECK(p.predicted == ds.labels);
  REQUIRE(p.member_votes.size() == 50);
  CHECK(p.member_votes[7].size() == 5);
  const auto single = evaluate_holdout_protocol(OracleClassifier(C, true), ds);
  for (std::size_t i = 0; i < 50; ++i) CHECK(single.predicted[i] == (ds.labels[i] + 1) % 5);
  CHECK(single.member_votes.empty());

  const auto csv = phoneme_csv(p);
  CHECK(csv.rfind("index,predicted_class,votes\n", 0) == 0);
  CHECK(csv.find("\n1,1,1;1;1;2;2\n") != std::string::npos);

  CHECK_THROWS_AS(evaluate_holdout_protocol(OracleClassifier(4, false), ds), ContractError);
  Ensemble mixed;
  mixed.members = {std::make_shared<OracleClassifier>(5, false), std::make_shared<OracleClassifier>(4, false)};
  CHECK_THROWS_AS(mixed.validate(), ContractError);
  CHECK_THROWS_AS(Ensemble{}.validate(), ContractError);
}

TEST_CASE("speech evaluation of a perfect detector") {
  pipeline::Recording rec;
  std::vector<int> labels(1000, 0);
  for (std::size_t i = 200; i < 400; ++i) labels[i] = 1;
  for (std::size_t i = 600; i < 800; ++i) labels[i] = 1;
  for (std::size_t i = 500; i < 530; ++i) labels[i] = 1;  // too short to survive smoothing
  std::vector<double> values(labels.begin(), labels.end());
  rec.signal = MegWindow(1, 1000, 250.0, values);
  rec.labels = labels;
  std::vector<std::shared_ptr<const WindowClassifier>> members{std::make_shared<CenterClassifier>()};
  const auto r = evaluate_speech(members, rec, 51, 1, 60);
  REQUIRE(r.raw.size() == 1000);
  CHECK(r.raw == labels);
  CHECK(r.raw_metrics.accuracy == 1.0);
  CHECK(r.metrics.accuracy == doctest::Approx(0.97));
  for (std::size_t i = 500; i < 530; ++i) CHECK(r.smoothed[i] == 0);
  REQUIRE(r.metrics.auroc_macro);
  CHECK(*r.metrics.auroc_macro == 1.0);

  const auto csv = speech_csv(r.probabilities, r.raw, r.smoothed);
  CHECK(csv.rfind("index,probability,raw_label,smoothed_label\n", 0) == 0);
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 1001);
}
