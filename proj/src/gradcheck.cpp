// SPDX-License-Identifier: Apache-2.0
#include "megc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "megc/error.hpp"
#include "megc/model.hpp"
#include "megc/ops.hpp"
#include "megc/rng.hpp"

namespace megc::nn {

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradientComparison compare_gradients(const ScalarFn& f, std::vector<Tensor> inputs, double step, double corrupt) {
  for (auto& t : inputs) t.zero_grad();
  const Tensor loss = f(inputs);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    auto g = t.grad();
    std::vector<double> a(t.numel(), 0.0);
    if (g.size() == a.size()) std::copy(g.begin(), g.end(), a.begin());
    for (double& x : a) x *= corrupt;
    analytic.push_back(std::move(a));
  }
  GradientComparison out;
  NoGradGuard guard;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double plus = f(inputs).item();
      values[k] = saved - step;
      const double minus = f(inputs).item();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      out.max_rel_error = std::max(out.max_rel_error, gradient_relative_error(analytic[i][k], numeric));
      ++out.checked;
    }
  }
  return out;
}

bool GradcheckReport::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.pass) out.push_back(e.op);
  }
  return out;
}

std::string GradcheckReport::text() const {
  std::string out;
  char buf[160];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-16s max_rel_err=%.3e  n=%zu  %s\n", e.op.c_str(), e.max_rel_error, e.checked,
                  e.pass ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {
      "add",       "scale",          "mul",        "linear",       "matmul",       "reshape",
      "permute",   "softmax",        "normalize",  "affine",       "layer_norm",   "glu",
      "swish",     "sigmoid",        "conv1d",     "depthwise_conv", "mean_pool", "dropout_eval",
      "dropout_train", "sum",        "weighted_sum", "conformer_toy"};
  return ops;
}

namespace {

struct Builder {
  std::mt19937_64 rng;

  Tensor leaf(Shape shape, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = g(rng);
    return Tensor::from_values(std::move(shape), std::move(v), true);
  }
  std::vector<double> weights(std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> w(n);
    for (double& x : w) x = g(rng);
    return w;
  }
};

// Reduces an op's output to a scalar with fixed random weights.
ScalarFn reduce(std::function<Tensor(const std::vector<Tensor>&)> op, Builder& b, std::size_t out_numel) {
  auto w = b.weights(out_numel);
  return [op = std::move(op), w](const std::vector<Tensor>& in) { return weighted_sum(op(in), w); };
}

struct Case {
  ScalarFn f;
  std::vector<Tensor> inputs;
};

Case make_case(const std::string& op, Builder& b, std::uint64_t seed) {
  using V = std::vector<Tensor>;
  if (op == "add") return {reduce([](const V& v) { return add(v[0], v[1]); }, b, 24), {b.leaf({2, 3, 4}), b.leaf({4})}};
  if (op == "scale") return {reduce([](const V& v) { return scale(v[0], -1.7); }, b, 6), {b.leaf({2, 3})}};
  if (op == "mul") return {reduce([](const V& v) { return mul(v[0], v[1]); }, b, 12), {b.leaf({3, 4}), b.leaf({3, 4})}};
  if (op == "linear") {
    return {reduce([](const V& v) { return linear(v[0], v[1], v[2]); }, b, 24),
            {b.leaf({2, 3, 5}), b.leaf({4, 5}), b.leaf({4})}};
  }
  if (op == "matmul") {
    auto w = b.weights(30);
    auto w2 = b.weights(30);
    ScalarFn f = [w, w2](const V& v) {
      return add(weighted_sum(bmm(v[0], v[1]), w), weighted_sum(bmm(v[0], v[2], true), w2));
    };
    return {f, {b.leaf({2, 3, 4}), b.leaf({2, 4, 5}), b.leaf({2, 5, 4})}};
  }
  if (op == "reshape") return {reduce([](const V& v) { return reshape(v[0], {4, 6}); }, b, 24), {b.leaf({2, 3, 4})}};
  if (op == "permute") return {reduce([](const V& v) { return permute(v[0], {2, 0, 1}); }, b, 24), {b.leaf({2, 3, 4})}};
  if (op == "softmax") return {reduce([](const V& v) { return softmax(v[0]); }, b, 15), {b.leaf({3, 5})}};
  if (op == "normalize") return {reduce([](const V& v) { return normalize_lastdim(v[0], 1e-5); }, b, 18), {b.leaf({3, 6})}};
  if (op == "affine") {
    return {reduce([](const V& v) { return affine_lastdim(v[0], v[1], v[2]); }, b, 15),
            {b.leaf({3, 5}), b.leaf({5}), b.leaf({5})}};
  }
  if (op == "layer_norm") {
    return {reduce([](const V& v) { return layer_norm(v[0], v[1], v[2], 1e-5); }, b, 24),
            {b.leaf({2, 3, 4}), b.leaf({4}), b.leaf({4})}};
  }
  if (op == "glu") return {reduce([](const V& v) { return glu(v[0]); }, b, 12), {b.leaf({3, 8})}};
  if (op == "swish") return {reduce([](const V& v) { return swish(v[0]); }, b, 12), {b.leaf({3, 4})}};
  if (op == "sigmoid") return {reduce([](const V& v) { return sigmoid(v[0]); }, b, 12), {b.leaf({3, 4})}};
  if (op == "conv1d") {
    // T = 9, K = 3, stride 2, padding 1 -> 5 outputs.
    return {reduce([](const V& v) { return conv1d(v[0], v[1], v[2], 2, 1); }, b, 2 * 4 * 5),
            {b.leaf({2, 3, 9}), b.leaf({4, 3, 3}), b.leaf({4})}};
  }
  if (op == "depthwise_conv") {
    return {reduce([](const V& v) { return depthwise_conv1d(v[0], v[1], v[2]); }, b, 2 * 7 * 3),
            {b.leaf({2, 7, 3}), b.leaf({3, 5}), b.leaf({3})}};
  }
  if (op == "mean_pool") return {reduce([](const V& v) { return mean_pool_time(v[0]); }, b, 8), {b.leaf({2, 5, 4})}};
  if (op == "dropout_eval") {
    return {reduce([](const V& v) { return dropout(v[0], 0.3, false, nullptr); }, b, 12), {b.leaf({3, 4})}};
  }
  if (op == "dropout_train") {
    return {reduce(
                [seed](const V& v) {
                  auto r = make_rng({seed, 0xd0});
                  return dropout(v[0], 0.3, true, &r);
                },
                b, 12),
            {b.leaf({3, 4})}};
  }
  if (op == "sum") return {[](const V& v) { return sum(v[0]); }, {b.leaf({3, 4})}};
  if (op == "weighted_sum") return {reduce([](const V& v) { return v[0]; }, b, 12), {b.leaf({3, 4})}};
  throw ContractError("gradcheck: unknown op '" + op + "'");
}

GradientComparison check_toy_model(std::uint64_t seed, double step, double corrupt) {
  ModelConfig c;
  c.in_channels = 4;
  c.hidden = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 32;
  c.depthwise_kernel = 3;
  c.dropout = 0.1;
  c.input_norm = InputNorm::instance;
  c.head = HeadKind::multiclass;
  c.n_classes = 3;
  c.window_samples = 12;
  auto model = std::make_shared<ConformerModel>(ConformerModel::init(c, seed));
  Builder b{make_rng({seed, 0x70})};
  const Tensor input = b.leaf({2, c.in_channels, c.window_samples}).detach();
  const auto w = b.weights(2 * c.n_classes);
  ScalarFn f = [model, input, w, seed](const std::vector<Tensor>&) {
    auto r = make_rng({seed, 0xd1});
    return weighted_sum(model->forward(input, Mode::train, &r), w);
  };
  std::vector<Tensor> params;
  for (const auto& p : model->parameters()) params.push_back(p.tensor);
  return compare_gradients(f, params, step, corrupt);
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  const auto& ops = gradcheck_ops();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    const double corrupt = options.inject_fault && *options.inject_fault == op ? 1.0 + 1e-3 : 1.0;
    GradientComparison cmp;
    if (op == "conformer_toy") {
      cmp = check_toy_model(options.seed, options.step, corrupt);
    } else {
      Builder b{make_rng({options.seed, i})};
      auto cs = make_case(op, b, options.seed);
      cmp = compare_gradients(cs.f, cs.inputs, options.step, corrupt);
    }
    report.entries.push_back({op, cmp.max_rel_error, cmp.checked, cmp.max_rel_error < options.tolerance});
  }
  return report;
}

}  // namespace megc::nn
