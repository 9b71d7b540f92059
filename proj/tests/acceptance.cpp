// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Pass criterion numbers as arguments to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "megc/analysis.hpp"
#include "megc/cli.hpp"
#include "megc/gradcheck.hpp"
#include "megc/infer.hpp"
#include "megc/metrics.hpp"
#include "megc/ops.hpp"
#include "megc/pipeline.hpp"
#include "megc/rng.hpp"
#include "megc/signal.hpp"
#include "megc/train.hpp"

using namespace megc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

class Stopwatch {
 public:
  double wall() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0_).count(); }
  double cpu() const { return static_cast<double>(std::clock() - cpu0_) / CLOCKS_PER_SEC; }

 private:
  std::chrono::steady_clock::time_point wall0_ = std::chrono::steady_clock::now();
  std::clock_t cpu0_ = std::clock();
};

train::TrainConfig desk_train(std::uint64_t seed, std::size_t epochs, std::size_t patience) {
  train::TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 32;
  tc.max_epochs = epochs;
  tc.patience = patience;
  tc.seed = seed;
  return tc;
}

double accuracy(const nn::ConformerModel& m, const pipeline::Dataset& ds) {
  const auto pred = train::predict_labels(m, ds);
  return eval::confusion_metrics(ds.labels, pred, ds.n_classes()).accuracy;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  Stopwatch sw;
  const auto report = nn::run_gradcheck({});
  double worst = 0.0;
  bool toy = false;
  for (const auto& e : report.entries) {
    worst = std::max(worst, e.max_rel_error);
    toy = toy || e.op == "conformer_toy";
  }
  const double wall = sw.wall(), cpu = sw.cpu();
  const bool pass = report.pass() && worst < 1e-4 && toy && wall < 120.0 && cpu < 120.0;
  return {pass, std::to_string(report.entries.size()) + " checks, max rel error " + sci(worst) +
                    ", wall " + fmt(wall, 1) + " s, cpu " + fmt(cpu, 1) + " s"};
}

Outcome exact_statistics() {
  std::vector<double> a(10), b(10, 0.0), above(10);
  for (int i = 0; i < 10; ++i) {
    a[static_cast<std::size_t>(i)] = 0.5 + 0.01 * (i + 1);
    above[static_cast<std::size_t>(i)] = 0.05 + 0.01 * i;
  }
  const auto paired = eval::wilcoxon_signed_rank(a, b, eval::WilcoxonMode::paired_two_sided);
  const auto greater = eval::wilcoxon_signed_rank(above, 0.0, eval::WilcoxonMode::one_sample_greater);
  std::vector<double> d(10);
  for (std::size_t i = 0; i < 10; ++i) d[i] = a[i] - b[i];
  const auto [two, one_paired] = test::enumerate_wilcoxon(d);
  const auto [two_above, one] = test::enumerate_wilcoxon(above);
  (void)one_paired;
  (void)two_above;
  const auto printed = [](double p) { return std::round(p * 1000.0) / 1000.0; };
  const bool pass = paired.statistic == 0.0 && std::abs(paired.p_value - two) < 1e-15 &&
                    std::abs(paired.p_value - 0.001953125) < 1e-9 && printed(paired.p_value) == 0.002 &&
                    greater.statistic == 55.0 && std::abs(greater.p_value - one) < 1e-15 &&
                    std::abs(greater.p_value - 0.0009765625) < 1e-9 && printed(greater.p_value) == 0.001;
  return {pass, "W=" + fmt(paired.statistic, 1) + " p=" + fmt(paired.p_value, 6) + " (two-sided); W=" +
                    fmt(greater.statistic, 1) + " p=" + fmt(greater.p_value, 6) + " (one-sided)"};
}

Outcome class_weight_contract() {
  bool pass = true;
  const auto w14 = pipeline::compute_class_weights(std::vector<std::size_t>{1, 4}).weights;
  pass = pass && std::abs(w14[0] - 4.0 / 3.0) < 1e-12 && std::abs(w14[1] - 2.0 / 3.0) < 1e-12;
  const auto w149 = pipeline::compute_class_weights(std::vector<std::size_t>{1, 4, 9}).weights;
  pass = pass && std::abs(w149[0] - 18.0 / 11.0) < 1e-12 && std::abs(w149[1] - 9.0 / 11.0) < 1e-12 &&
         std::abs(w149[2] - 6.0 / 11.0) < 1e-12;
  auto rng = make_rng({0xacc3});
  double worst_mean = 0.0, worst_ratio = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto C = test::uniform_size(rng, 1, 50);
    std::vector<std::size_t> counts(C);
    for (auto& n : counts) n = test::uniform_size(rng, 1, 100000);
    const auto w = pipeline::compute_class_weights(counts).weights;
    double mean = 0.0;
    for (double x : w) mean += x / static_cast<double>(C);
    worst_mean = std::max(worst_mean, std::abs(mean - 1.0));
    for (std::size_t i = 0; i < C; ++i) {
      const double expect = std::sqrt(static_cast<double>(counts[0]) / static_cast<double>(counts[i]));
      worst_ratio = std::max(worst_ratio, std::abs(w[i] / w[0] - expect) / expect);
    }
  }
  pass = pass && worst_mean <= 1e-12 && worst_ratio <= 1e-12;
  return {pass, "hand vectors ok=" + std::string(pass ? "yes" : "no") + ", worst |mean-1| " +
                    sci(worst_mean) + ", worst ratio error " + sci(worst_ratio)};
}

Outcome dsp_contract() {
  const double fs = 250.0;
  const auto sine = [&](double f) {
    signal::MegWindow w(1, 5000, fs);
    for (std::size_t t = 0; t < 5000; ++t) w.at(0, t) = std::sin(2.0 * std::numbers::pi * f * t / fs);
    return w;
  };
  const auto tail_db = [&](const signal::IirBiquadCascade& f, double hz) {
    const auto x = sine(hz);
    const auto y = signal::apply_filter(x, f);
    double ex = 0.0, ey = 0.0;
    for (std::size_t t = 2500; t < 5000; ++t) {
      ex += x.at(0, t) * x.at(0, t);
      ey += y.at(0, t) * y.at(0, t);
    }
    return 10.0 * std::log10(ey / ex);
  };
  bool pass = true;
  double least_stop = 1e9, worst_pass = 0.0, max_pole = 0.0;
  for (const auto& band : signal::default_bands()) {
    for (int order : {2, 4, 6, 8}) {
      const auto f = signal::design_bandstop(band, fs, order);
      max_pole = std::max(max_pole, f.max_pole_modulus());
      pass = pass && f.stable();
    }
    const auto f = signal::design_bandstop(band, fs, 4);
    const double stop = -tail_db(f, std::sqrt(band.low_hz * band.high_hz));
    least_stop = std::min(least_stop, stop);
    pass = pass && stop >= 20.0;
    std::vector<double> outside{band.low_hz / 3.0};
    if (2.0 * band.high_hz < 115.0) outside.push_back(2.0 * band.high_hz);
    for (double hz : outside) {
      const double g = std::abs(tail_db(f, hz));
      worst_pass = std::max(worst_pass, g);
      pass = pass && g <= 1.0;
    }
  }
  return {pass, "least center attenuation " + fmt(least_stop, 1) + " dB, worst passband deviation " +
                    fmt(worst_pass, 3) + " dB, max pole modulus " + fmt(max_pole, 6)};
}

Outcome smoothing_contract() {
  auto rng = make_rng({0xacc5});
  std::size_t short_survivors = 0, lost_exact = 0, not_idempotent = 0, exact_runs = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    // Alternating runs with lengths that often land on exactly 60.
    std::vector<int> x;
    int cur = trial % 2;
    const auto target = test::uniform_size(rng, 0, 600);
    while (x.size() < target) {
      const auto pick = test::uniform_size(rng, 0, 4);
      const std::size_t len = pick == 0 ? 60 : pick == 1 ? 59 : test::uniform_size(rng, 1, 150);
      x.insert(x.end(), len, cur);
      cur = 1 - cur;
    }
    const auto y = infer::smooth_runs(x, 60);
    for (auto len : test::positive_runs(y)) short_survivors += len < 60;
    for (std::size_t i = 0; i < x.size();) {
      std::size_t j = i;
      while (j < x.size() && x[j] == x[i]) ++j;
      if (x[i] == 1 && j - i == 60) {
        ++exact_runs;
        for (std::size_t k = i; k < j; ++k) {
          if (y[k] != 1) {
            ++lost_exact;
            break;
          }
        }
      }
      i = j;
    }
    not_idempotent += infer::smooth_runs(y, 60) != y;
  }
  const bool pass = short_survivors == 0 && lost_exact == 0 && not_idempotent == 0 && exact_runs > 0;
  return {pass, "10000 sequences: short survivors " + std::to_string(short_survivors) + ", exact-60 runs lost " +
                    std::to_string(lost_exact) + "/" + std::to_string(exact_runs) + ", non-idempotent " +
                    std::to_string(not_idempotent)};
}

Outcome conv_arithmetic() {
  const auto a = nn::conv1d_out_len(125, 50, 25), b = nn::conv1d_out_len(625, 50, 160);
  return {a == 4 && b == 4, "(125,50,25)->" + std::to_string(a) + ", (625,50,160)->" + std::to_string(b)};
}

Outcome end_to_end_learning() {
  Stopwatch sw;
  const auto spec = pipeline::desk_phoneme_spec(4, 100, 50, 1.0);
  auto splits = pipeline::synthesize_splits(spec, 7);
  const auto& val = splits.at(pipeline::Split::validation);
  const auto mc = nn::ModelConfig::phoneme_desk(4);
  auto model = nn::ConformerModel::init(mc, 1);
  const auto tc = desk_train(1, 20, 5);
  const auto data = train::window_fit_data(splits.at(pipeline::Split::train), val, tc);
  const auto res = train::fit(model, data, train::LossConfig{}, tc);

  // Replay the log: the returned snapshot is the first epoch with the top score.
  std::size_t replay_best = 0;
  double top = -1.0;
  std::size_t since = 0;
  bool counters_ok = true;
  for (const auto& r : res.log) {
    if (r.val_f1_macro > top) {
      top = r.val_f1_macro;
      replay_best = r.epoch;
      since = 0;
    } else {
      ++since;
    }
    counters_ok = counters_ok && r.patience_counter == since;
  }
  const double rescored = train::window_f1_macro(res.best, val);
  const double last = train::window_f1_macro(model, val);
  bool differs = false;
  for (std::size_t i = 0; i < model.parameters().size() && !differs; ++i) {
    const auto x = model.parameters()[i].tensor.values(), y = res.best.parameters()[i].tensor.values();
    differs = !std::equal(x.begin(), x.end(), y.begin(), y.end());
  }
  const bool snapshot_ok = replay_best == res.best_epoch && rescored == res.best_val_f1 &&
                           (res.best_epoch == res.log.size() || differs);
  const double cpu = sw.cpu();
  const bool pass = res.best_val_f1 >= 0.9 && res.log.size() <= 20 && cpu < 600.0 && counters_ok && snapshot_ok;
  return {pass, "val F1 " + fmt(res.best_val_f1) + " at epoch " + std::to_string(res.best_epoch) + " of " +
                    std::to_string(res.log.size()) + ", last-epoch F1 " + fmt(last) + ", replay " +
                    (counters_ok && snapshot_ok ? "ok" : "MISMATCH") + ", cpu " + fmt(cpu, 1) + " s"};
}

Outcome instance_norm_robustness() {
  std::vector<double> with, without, diffs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = pipeline::desk_phoneme_spec(4, 100, 50, 0.5);
    spec.splits[2].counts.assign(4, 200);
    spec.splits[2].drift_low = 0.5;
    spec.splits[2].drift_high = 2.0;
    auto splits = pipeline::synthesize_splits(spec, 100 + seed);
    for (auto norm : {nn::InputNorm::instance, nn::InputNorm::none}) {
      auto mc = nn::ModelConfig::phoneme_desk(4);
      mc.input_norm = norm;
      auto model = nn::ConformerModel::init(mc, seed);
      const auto tc = desk_train(seed, 6, 100);
      const auto data =
          train::window_fit_data(splits.at(pipeline::Split::train), splits.at(pipeline::Split::validation), tc);
      const auto res = train::fit(model, data, train::LossConfig{}, tc);
      const double f1 = train::window_f1_macro(res.best, splits.at(pipeline::Split::test));
      (norm == nn::InputNorm::instance ? with : without).push_back(f1);
    }
    diffs.push_back(with.back() - without.back());
  }
  const double margin = eval::mean_of(with) - eval::mean_of(without);
  std::string test_desc;
  bool significant = false;
  try {
    const auto w = eval::wilcoxon_signed_rank(diffs, 0.0, eval::WilcoxonMode::one_sample_greater);
    significant = w.p_value <= 0.05;
    test_desc = "W+=" + fmt(w.statistic, 1) + " p=" + fmt(w.p_value);
  } catch (const std::exception& e) {
    test_desc = e.what();
  }
  return {margin > 0.0 && significant, "mean F1 instance " + fmt(eval::mean_of(with)) + " vs none " +
                                           fmt(eval::mean_of(without)) + ", margin " + fmt(margin) + ", " +
                                           test_desc};
}

Outcome grouping_benefit() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = pipeline::desk_phoneme_spec(4, 1000, 200, 0.1);
    spec.splits[2].counts.assign(4, 1000);
    auto splits = pipeline::synthesize_splits(spec, 300 + seed);
    auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(4), seed);
    auto tc = desk_train(seed, 40, 100);
    tc.group_size = 100;
    const auto& v = splits.at(pipeline::Split::validation);
    const auto val = pipeline::averaged_dataset(v, pipeline::make_grouping_plan(v.labels, 20, seed));
    const auto data = train::window_fit_data(splits.at(pipeline::Split::train), val, tc);
    const auto res = train::fit(model, data, train::LossConfig{}, tc);
    const auto& test = splits.at(pipeline::Split::test);
    const auto avg = pipeline::averaged_dataset(test, pipeline::make_grouping_plan(test.labels, 100, seed));
    const double raw_acc = accuracy(res.best, test), avg_acc = accuracy(res.best, avg);
    pass = pass && avg_acc >= raw_acc;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " raw " + fmt(raw_acc, 3) +
              " G100 " + fmt(avg_acc, 3);
  }
  return {pass, detail};
}

Outcome metric_oracles() {
  auto rng = make_rng({0xacca});
  std::size_t mismatches = 0, auroc_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto C = static_cast<int>(test::uniform_size(rng, 1, 10));
    const auto n = test::uniform_size(rng, 1, 200);
    const auto hi = test::uniform_size(rng, 0, static_cast<std::size_t>(C - 1));
    std::vector<int> t(n), p(n);
    for (auto& x : t) x = static_cast<int>(test::uniform_size(rng, 0, hi));
    for (auto& x : p) x = static_cast<int>(test::uniform_size(rng, 0, hi));
    const bool zero = trial % 2;
    const auto r = eval::confusion_metrics(t, p, static_cast<std::size_t>(C),
                                           zero ? eval::AbsentClassPolicy::count_zero : eval::AbsentClassPolicy::exclude);
    const auto b = test::brute_metrics(t, p, C, zero);
    mismatches += r.confusion != b.confusion || std::abs(r.f1_macro - b.f1_macro) > 1e-12 ||
                  std::abs(r.balanced_accuracy - b.balanced) > 1e-12 || std::abs(r.accuracy - b.accuracy) > 1e-12;

    std::vector<int> pos(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = t[i] == 0;
      s[i] = static_cast<double>(test::uniform_size(rng, 0, 20)) / 8.0;
    }
    const bool defined = std::count(pos.begin(), pos.end(), 1) > 0 && std::count(pos.begin(), pos.end(), 0) > 0;
    if (defined) auroc_mismatch += std::abs(eval::auroc_binary(pos, s) - test::pair_auroc(pos, s)) > 1e-12;
  }
  const std::vector<int> t3{0, 1, 2}, p3{0, 2, 1}, tb{1, 1, 0, 0}, pb{1, 0, 1, 0};
  const bool hand = std::abs(eval::confusion_metrics(t3, p3, 3).f1_macro - 1.0 / 3.0) < 1e-15 &&
                    std::abs(*eval::confusion_metrics(tb, pb, 2).jaccard - 1.0 / 3.0) < 1e-15 &&
                    std::abs(eval::auroc_binary(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.9, 0.8, 0.4, 0.1}) -
                             0.75) < 1e-15;
  return {mismatches == 0 && auroc_mismatch == 0 && hand,
          "1000 instances: metric mismatches " + std::to_string(mismatches) + ", AUROC mismatches " +
              std::to_string(auroc_mismatch) + ", hand cases " + (hand ? "ok" : "WRONG")};
}

Outcome determinism() {
  test::ScratchDir dir("acceptance_det");
  const auto write = [](const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; };
  write(dir / "phoneme.json", R"({"task": "phoneme", "channels": 16, "samples": 32, "n_classes": 4, "snr": 1.0,
    "splits": [{"name": "train", "counts": [30, 30, 30, 30]}, {"name": "validation", "counts": [10, 10, 10, 10]}]})");
  write(dir / "speech.json", R"({"task": "speech", "channels": 8, "segment_samples": 25,
    "splits": [{"name": "train", "segments": 60}]})");
  std::ostringstream sink;
  const auto cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  int codes = 0;
  for (const std::string g : {"g1", "g2"}) {
    codes += cli({"gen-data", "--spec", (dir / "phoneme.json").string(), "--out", (dir / g).string(), "--seed", "21"});
    codes += cli({"gen-data", "--spec", (dir / "speech.json").string(), "--out", (dir / (g + "_speech.megw")).string(),
                  "--seed", "21"});
  }
  std::vector<std::string> differing;
  for (const std::string f : {"train.megw", "validation.megw"}) {
    if (test::slurp(dir / "g1" / f) != test::slurp(dir / "g2" / f)) differing.push_back(f);
  }
  if (test::slurp(dir / "g1_speech.megw") != test::slurp(dir / "g2_speech.megw")) differing.push_back("speech.megw");
  for (const std::string r : {"r1", "r2"}) {
    codes += cli({"train", "--task", "phoneme", "--train", (dir / "g1" / "train.megw").string(), "--val",
                  (dir / "g1" / "validation.megw").string(), "--out", (dir / r).string(), "--seed", "31", "--seeds",
                  "2", "--epochs", "3"});
  }
  std::size_t compared = 0;
  for (const std::string f : {"seed_31.megc", "seed_32.megc", "seed_31.log.jsonl", "seed_32.log.jsonl",
                              "manifest.json"}) {
    ++compared;
    if (!fs::exists(dir / "r1" / f) || test::slurp(dir / "r1" / f) != test::slurp(dir / "r2" / f)) {
      differing.push_back(f);
    }
  }
  std::string list;
  for (const auto& d : differing) list += " " + d;
  return {codes == 0 && differing.empty(), "exit codes sum " + std::to_string(codes) + ", " +
                                               std::to_string(compared + 3) + " artifacts compared, differing:" +
                                               (list.empty() ? " none" : list)};
}

Outcome data_size_trend() {
  const auto spec = pipeline::desk_phoneme_spec(4, 100, 50, 0.3);
  const auto splits = pipeline::synthesize_splits(spec, 77);
  const std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto curve = eval::data_size_sweep(
      fractions, splits.at(pipeline::Split::train), seeds, [&](const pipeline::Dataset& sub, std::uint64_t seed) {
        auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(4), seed);
        const auto tc = desk_train(seed, 10, 4);
        const auto res = train::fit(model, train::window_fit_data(sub, splits.at(pipeline::Split::validation), tc),
                                    train::LossConfig{}, tc);
        return train::window_f1_macro(res.best, splits.at(pipeline::Split::test));
      });
  bool pass = curve.points.size() == fractions.size();
  std::string detail;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    detail += (i ? ", " : "") + fmt(p.fraction, 2) + ":" + fmt(p.mean, 3) + "±" + fmt(p.std, 3);
    if (i) {
      const auto& q = curve.points[i - 1];
      const double pooled = std::sqrt((p.std * p.std + q.std * q.std) / 2.0);
      pass = pass && p.mean >= q.mean - pooled;
    }
  }
  return {pass, "mean F1 by fraction " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "exact statistics", exact_statistics},
      {3, "class weight contract", class_weight_contract},
      {4, "bandstop contract", dsp_contract},
      {5, "smoothing contract", smoothing_contract},
      {6, "conv arithmetic", conv_arithmetic},
      {7, "end-to-end learning", end_to_end_learning},
      {8, "instance-norm shift robustness", instance_norm_robustness},
      {9, "grouping benefit", grouping_benefit},
      {10, "metric oracle equivalence", metric_oracles},
      {11, "determinism", determinism},
      {12, "data-size trend", data_size_trend},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Stopwatch sw;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << "  [" << fmt(sw.wall(), 1) << " s]" << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
