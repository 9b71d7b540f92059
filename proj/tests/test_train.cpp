// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "megc/error.hpp"
#include "megc/rng.hpp"
#include "megc/train.hpp"

using namespace megc;
using namespace megc::train;

namespace {

// Reference losses written from the definitions, without the stable forms.
double bce_reference(double z, int y, double s, double w) {
  const double t = y * (1.0 - s) + s / 2.0;
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -w * t * std::log(p) - (1.0 - t) * std::log(1.0 - p);
}

double ce_reference(const std::vector<double>& z, int target, const std::vector<double>& w, double s) {
  double denom = 0.0;
  for (double v : z) denom += std::exp(v);
  const double C = static_cast<double>(z.size());
  const double wt = w.empty() ? 1.0 : w[static_cast<std::size_t>(target)];
  double loss = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double q = (static_cast<int>(k) == target ? 1.0 - s : 0.0) + s / C;
    loss -= wt * q * std::log(std::exp(z[k]) / denom);
  }
  return loss;
}

pipeline::Dataset tiny_dataset(std::uint64_t seed, std::size_t per_class, std::size_t classes = 2) {
  auto spec = pipeline::desk_phoneme_spec(classes, per_class, per_class, 2.0);
  return pipeline::synthesize_splits(spec, seed).at(pipeline::Split::train);
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.patience = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("binary cross-entropy values") {
  CHECK(bce_smoothed(0.0, 1, 0.0).loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(bce_smoothed(0.0, 0, 0.0).loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  // Smoothing 0.1 moves the positive target to 0.95.
  CHECK(bce_smoothed(0.0, 1, 0.1).grad == doctest::Approx(0.5 - 0.95).epsilon(1e-15));
  CHECK(bce_smoothed(0.0, 0, 0.1).grad == doctest::Approx(0.5 - 0.05).epsilon(1e-15));
  // Large logits stay finite.
  CHECK(std::isfinite(bce_smoothed(800.0, 0, 0.0).loss));
  CHECK(std::isfinite(bce_smoothed(-800.0, 1, 0.1, 3.0).loss));
  CHECK(bce_smoothed(800.0, 1, 0.0).loss == doctest::Approx(0.0));

  auto rng = make_rng({31});
  std::uniform_real_distribution<double> zd(-6.0, 6.0), sd(0.0, 0.45), wd(0.2, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double z = zd(rng), s = sd(rng), w = wd(rng);
    const int y = trial % 2;
    const auto l = bce_smoothed(z, y, s, w);
    CHECK(l.loss == doctest::Approx(bce_reference(z, y, s, w)).epsilon(1e-10));
    const double h = 1e-6;
    const double fd = (bce_reference(z + h, y, s, w) - bce_reference(z - h, y, s, w)) / (2.0 * h);
    CHECK(l.grad == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("weighted cross-entropy values") {
  for (std::size_t C : {2u, 4u, 39u}) {
    const std::vector<double> z(C, 0.3);
    CHECK(weighted_cross_entropy(z, 1, {}).loss == doctest::Approx(std::log(static_cast<double>(C))).epsilon(1e-14));
  }
  const std::vector<double> z{0.0, 0.0}, w{2.0, 0.5};
  CHECK(weighted_cross_entropy(z, 0, w).loss == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-15));
  CHECK(weighted_cross_entropy(z, 1, w).loss == doctest::Approx(0.5 * std::numbers::ln2).epsilon(1e-15));
  CHECK_THROWS_AS(weighted_cross_entropy(z, 2, w), ContractError);
  CHECK_THROWS_AS(weighted_cross_entropy(z, 0, std::vector<double>{1.0}), ContractError);

  auto rng = make_rng({32});
  std::uniform_real_distribution<double> zd(-4.0, 4.0), sd(0.0, 0.45), wd(0.2, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto C = test::uniform_size(rng, 2, 8);
    std::vector<double> logits(C), weights(trial % 3 == 0 ? 0 : C);
    for (double& v : logits) v = zd(rng);
    for (double& v : weights) v = wd(rng);
    const int target = static_cast<int>(test::uniform_size(rng, 0, C - 1));
    const double s = trial % 2 ? sd(rng) : 0.0;
    const auto l = weighted_cross_entropy(logits, target, weights, s);
    CHECK(l.loss == doctest::Approx(ce_reference(logits, target, weights, s)).epsilon(1e-10));
    for (std::size_t k = 0; k < C; ++k) {
      auto up = logits, down = logits;
      up[k] += 1e-6;
      down[k] -= 1e-6;
      const double fd = (ce_reference(up, target, weights, s) - ce_reference(down, target, weights, s)) / 2e-6;
      CHECK(l.grad[k] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("batch loss is the mean of per-example losses") {
  auto rng = make_rng({33});
  const auto vals = test::gaussian(rng, 5 * 3);
  const std::vector<int> targets{0, 2, 1, 1, 0};
  LossConfig cfg;
  cfg.class_weights = pipeline::ClassWeights{{1.5, 0.5, 1.0}};
  cfg.label_smoothing = 0.1;
  const auto logits = nn::Tensor::from_values({5, 3}, vals, true);
  const auto l = batch_loss(logits, targets, cfg);
  double expected = 0.0;
  std::vector<double> grad;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::span<const double> row(vals.data() + 3 * b, 3);
    const auto e = weighted_cross_entropy(row, targets[b], cfg.class_weights->weights, 0.1);
    expected += e.loss / 5.0;
    for (double g : e.grad) grad.push_back(g / 5.0);
  }
  CHECK(l.item() == doctest::Approx(expected).epsilon(1e-14));
  nn::backward(l);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(logits.grad()[i] == doctest::Approx(grad[i]).epsilon(1e-14));

  LossConfig bin;
  bin.kind = LossKind::bce_single_logit;
  bin.positive_weight = 2.0;
  const auto z = nn::Tensor::from_values({3, 1}, {0.5, -1.0, 2.0});
  const std::vector<int> y{1, 0, 1};
  double mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) mean += bce_smoothed(z.values()[i], y[i], 0.0, 2.0).loss / 3.0;
  CHECK(batch_loss(z, y, bin).item() == doctest::Approx(mean).epsilon(1e-14));
  CHECK_THROWS_AS(batch_loss(z, std::vector<int>{1, 0}, bin), ContractError);
}

TEST_CASE("loss config validation and JSON round trip") {
  LossConfig c;
  c.label_smoothing = 0.5;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.label_smoothing = 0.1;
  c.class_weights = pipeline::ClassWeights{{0.5, 1.5}};
  const auto back = loss_config_from_json(to_json(c));
  CHECK(back.kind == c.kind);
  CHECK(back.label_smoothing == c.label_smoothing);
  REQUIRE(back.class_weights);
  CHECK(back.class_weights->weights == c.class_weights->weights);
  CHECK_FALSE(back.positive_weight);
  c.positive_weight = 2.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("train config JSON round trip keeps unspecified fields") {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.batch_size = 17;
  c.group_size = 100;
  c.fixed_groups = true;
  signal::AugmentConfig a;
  a.time_mask_max_width = 36;
  c.augment = a;
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  TrainConfig base;
  base.patience = 3;
  const auto partial = train_config_from_json(nlohmann::json{{"max_epochs", 7}}, base);
  CHECK(partial.max_epochs == 7);
  CHECK(partial.patience == 3);
}

TEST_CASE("AdamW update arithmetic") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.weight_decay = 0.0;
  std::vector<double> p{1.0, -2.0, 0.5}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  adamw_update(p, g, m, v, 1, cfg, true);
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});

  // Zero gradient with decay: pure multiplicative shrink by 1 - lr*wd.
  cfg.weight_decay = 0.05;
  for (std::size_t step = 1; step <= 3; ++step) adamw_update(p, g, m, v, step, cfg, true);
  const double f = std::pow(1.0 - 5e-6, 3);
  CHECK(p[0] == doctest::Approx(f).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-2.0 * f).epsilon(1e-15));
  // Without the decay flag the value stays put.
  std::vector<double> q{1.0};
  std::vector<double> gq{0.0}, mq{0.0}, vq{0.0};
  adamw_update(q, gq, mq, vq, 1, cfg, false);
  CHECK(q[0] == 1.0);

  // First step: bias correction makes the move lr * g / (|g| + eps).
  std::vector<double> r{0.3, 0.3}, gr{2.0, -1e-3}, mr(2, 0.0), vr(2, 0.0);
  cfg.weight_decay = 0.0;
  adamw_update(r, gr, mr, vr, 1, cfg, false);
  CHECK(r[0] == doctest::Approx(0.3 - 1e-4 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(0.3 + 1e-4 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-14));
  // Second step, same gradient: m and v by hand.
  const double m2 = 0.9 * 0.1 * 2.0 + 0.1 * 2.0, v2 = 0.999 * 0.001 * 4.0 + 0.001 * 4.0;
  const double expect = r[0] - 1e-4 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  adamw_update(r, gr, mr, vr, 2, cfg, false);
  CHECK(r[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("AdamW step rejects non-finite gradients before changing anything") {
  auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 1);
  const auto before = model.clone();
  auto& params = model.parameters();
  for (auto& p : params) {
    auto g = p.tensor.mutable_grad();
    for (double& x : g) x = 0.01;
  }
  auto target = params.size() / 2;
  params[target].tensor.mutable_grad()[0] = std::nan("");
  AdamState state;
  try {
    adamw_step(params, state, TrainConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find(params[target].name) != std::string::npos);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto a = params[i].tensor.values(), b = before.parameters()[i].tensor.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_CASE("early stopping returns the best snapshot") {
  const auto train = tiny_dataset(5, 4);
  auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 2);
  std::vector<double> epoch1_values;
  FitData data;
  data.train_epoch = [&](std::size_t) { return train; };
  data.validate = [&](const nn::ConformerModel& m, std::size_t epoch) {
    if (epoch == 1) {
      for (const auto& p : m.parameters()) {
        const auto v = p.tensor.values();
        epoch1_values.insert(epoch1_values.end(), v.begin(), v.end());
      }
    }
    return 1.0 - 0.01 * static_cast<double>(epoch);  // worsens every epoch
  };
  auto cfg = quick_config(3);
  cfg.patience = 10;
  cfg.max_epochs = 50;
  LossConfig loss;
  const auto r = fit(model, data, loss, cfg);
  CHECK(r.stopped_early);
  CHECK(r.log.size() == 11);
  CHECK(r.best_epoch == 1);
  CHECK(r.best_val_f1 == doctest::Approx(0.99));
  for (std::size_t e = 0; e < r.log.size(); ++e) CHECK(r.log[e].patience_counter == e);
  std::vector<double> best_values;
  for (const auto& p : r.best.parameters()) {
    const auto v = p.tensor.values();
    best_values.insert(best_values.end(), v.begin(), v.end());
  }
  CHECK(best_values == epoch1_values);
}

TEST_CASE("ties keep the earliest epoch and improvements reset patience") {
  const auto train = tiny_dataset(5, 4);
  const std::vector<double> scores{0.5, 0.7, 0.7, 0.6, 0.8, 0.8, 0.8, 0.8};
  FitData data;
  data.train_epoch = [&](std::size_t) { return train; };
  data.validate = [&](const nn::ConformerModel&, std::size_t epoch) { return scores.at(epoch - 1); };
  auto cfg = quick_config(4);
  cfg.max_epochs = 20;
  cfg.patience = 2;
  auto m1 = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 2);
  const auto r1 = fit(m1, data, LossConfig{}, cfg);
  CHECK(r1.best_epoch == 2);
  CHECK(r1.stopped_early);
  CHECK(r1.log.size() == 4);

  cfg.patience = 3;
  auto m2 = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 2);
  const auto r2 = fit(m2, data, LossConfig{}, cfg);
  CHECK(r2.best_epoch == 5);
  CHECK(r2.stopped_early);
  REQUIRE(r2.log.size() == 8);
  const std::vector<std::size_t> counters{0, 0, 1, 2, 0, 1, 2, 3};
  for (std::size_t i = 0; i < 8; ++i) CHECK(r2.log[i].patience_counter == counters[i]);

  cfg.max_epochs = 6;
  auto m3 = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 2);
  const auto r3 = fit(m3, data, LossConfig{}, cfg);
  CHECK_FALSE(r3.stopped_early);
  CHECK(r3.log.size() == 6);
}

TEST_CASE("fit contract errors") {
  auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 2);
  const auto train = tiny_dataset(5, 4);
  FitData data;
  data.train_epoch = [&](std::size_t) { return train; };
  data.validation = train;
  LossConfig bin;
  bin.kind = LossKind::bce_single_logit;
  CHECK_THROWS_AS(fit(model, data, bin, quick_config(1)), ContractError);
  FitData empty;
  empty.train_epoch = [](std::size_t) { return pipeline::Dataset{}; };
  empty.validation = train;
  CHECK_THROWS_AS(fit(model, empty, LossConfig{}, quick_config(1)), ContractError);
  TrainConfig bad = quick_config(1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(fit(model, data, LossConfig{}, bad), ContractError);
}

TEST_CASE("fit is deterministic in its seeds") {
  const auto train = tiny_dataset(6, 8);
  FitData data;
  data.train_epoch = [&](std::size_t) { return train; };
  data.validation = train;
  auto run = [&] {
    auto model = nn::ConformerModel::init(nn::ModelConfig::phoneme_desk(2), 9);
    return fit(model, data, LossConfig{}, quick_config(9));
  };
  const auto a = run(), b = run();
  CHECK(log_jsonl(a.log, false) == log_jsonl(b.log, false));
  CHECK(log_jsonl(a.log, false).find("wall_seconds") == std::string::npos);
  CHECK(log_jsonl(a.log, true).find("wall_seconds") != std::string::npos);
  for (std::size_t i = 0; i < a.best.parameters().size(); ++i) {
    const auto x = a.best.parameters()[i].tensor.values(), y = b.best.parameters()[i].tensor.values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  // Each log line parses and carries the epoch fields.
  std::istringstream lines(log_jsonl(a.log, false));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch").get<std::size_t>() == ++n);
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_f1_macro"));
    CHECK(j.contains("patience_counter"));
  }
  CHECK(n == a.log.size());
}

TEST_CASE("grouped fit data draws fresh or frozen groupings") {
  const auto train = tiny_dataset(7, 20);
  auto cfg = quick_config(1);
  cfg.group_size = 5;
  const auto dynamic = window_fit_data(train, train, cfg);
  const auto e1 = dynamic.train_epoch(1), e2 = dynamic.train_epoch(2);
  CHECK(e1.size() == 8);
  CHECK(e1.class_counts() == std::vector<std::size_t>{4, 4});
  CHECK_FALSE(e1.windows == e2.windows);
  cfg.fixed_groups = true;
  const auto frozen = window_fit_data(train, train, cfg);
  const auto f1 = frozen.train_epoch(1), f2 = frozen.train_epoch(2);
  CHECK(f1.windows == f2.windows);
  CHECK(f1.labels == f2.labels);
  cfg.group_size = 0;
  CHECK(window_fit_data(train, train, cfg).train_epoch(3).windows == train.windows);
}

TEST_CASE("record windows take the center-sample label") {
  pipeline::Recording rec;
  rec.signal = signal::MegWindow(2, 10, 250.0);
  rec.labels = {0, 0, 0, 1, 1, 1, 1, 0, 0, 0};
  const auto ds = record_windows(rec, 4, 2, pipeline::Split::validation);
  // Windows start at 0, 2, 4, 6; centers at 2, 4, 6, 8.
  CHECK(ds.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(ds.windows.size() == 4);
  CHECK(ds.split == pipeline::Split::validation);
}

TEST_CASE("multi-seed runs record failures and sort by validation score") {
  const auto train = tiny_dataset(8, 6);
  Protocol proto;
  proto.model = nn::ModelConfig::phoneme_desk(2);
  proto.train = quick_config(0);
  proto.train.max_epochs = 2;
  proto.data = [&](std::uint64_t seed) {
    if (seed == 2) throw NumericError("synthetic failure");
    FitData d;
    d.train_epoch = [&](std::size_t) { return train; };
    d.validate = [seed](const nn::ConformerModel&, std::size_t) { return 0.1 * static_cast<double>(seed); };
    return d;
  };
  test::ScratchDir dir("multiseed");
  proto.out_dir = dir.path();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto runs = multi_seed(proto, seeds);
  REQUIRE(runs.size() == 4);
  CHECK(runs[0].seed == 4);
  CHECK(runs[1].seed == 3);
  CHECK(runs[2].seed == 1);
  CHECK(runs[3].seed == 2);
  CHECK_FALSE(runs[3].ok);
  CHECK(runs[3].error.find("synthetic failure") != std::string::npos);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(runs[i].ok);
    CHECK(std::filesystem::exists(runs[i].checkpoint));
  }
  const auto manifest = manifest_json(runs);
  CHECK(manifest.dump().find("synthetic failure") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
}
