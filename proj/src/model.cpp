// SPDX-License-Identifier: Apache-2.0
#include "megc/model.hpp"

#include <cmath>
#include <map>

#include "megc/error.hpp"
#include "megc/ops.hpp"

namespace megc::nn {

std::string to_string(InputNorm n) {
  switch (n) {
    case InputNorm::none: return "none";
    case InputNorm::instance: return "instance";
    case InputNorm::batch: return "batch";
    case InputNorm::layer: return "layer";
  }
  return "none";
}

InputNorm input_norm_from_string(const std::string& s) {
  if (s == "none") return InputNorm::none;
  if (s == "instance") return InputNorm::instance;
  if (s == "batch") return InputNorm::batch;
  if (s == "layer") return InputNorm::layer;
  throw ContractError("unknown input_norm '" + s + "'");
}

ModelConfig ModelConfig::speech_paper() {
  ModelConfig c;
  c.in_channels = 306;
  c.hidden = 144;
  c.num_layers = 16;
  c.num_heads = 4;
  c.ffn_dim = 576;
  c.depthwise_kernel = 31;
  c.dropout = 0.1;
  c.input_norm = InputNorm::none;
  c.head = HeadKind::single_logit;
  c.n_classes = 2;
  c.window_samples = 625;
  return c;
}

ModelConfig ModelConfig::phoneme_paper() {
  ModelConfig c;
  c.in_channels = 306;
  c.hidden = 144;
  c.num_layers = 7;
  c.num_heads = 12;
  c.ffn_dim = 2048;
  c.depthwise_kernel = 127;
  c.dropout = 0.1;
  c.input_norm = InputNorm::instance;
  c.head = HeadKind::multiclass;
  c.n_classes = 39;
  c.window_samples = 125;
  return c;
}

ModelConfig ModelConfig::speech_desk() {
  ModelConfig c = speech_paper();
  c.in_channels = 16;
  c.hidden = 32;
  c.num_layers = 2;
  c.num_heads = 4;
  c.ffn_dim = 64;
  c.depthwise_kernel = 7;
  c.window_samples = 125;
  return c;
}

ModelConfig ModelConfig::phoneme_desk(std::size_t n_classes) {
  ModelConfig c = phoneme_paper();
  c.in_channels = 16;
  c.hidden = 32;
  c.num_layers = 2;
  c.num_heads = 4;
  c.ffn_dim = 64;
  c.depthwise_kernel = 7;
  c.n_classes = n_classes;
  c.window_samples = 32;
  return c;
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (in_channels == 0 || hidden == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0 ||
      window_samples == 0) {
    fail("dimensions must be positive");
  }
  if (hidden % num_heads != 0) fail("hidden must be divisible by num_heads");
  if (depthwise_kernel % 2 == 0) fail("depthwise_kernel must be odd");
  if (projection_kernel % 2 == 0) fail("projection_kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (head == HeadKind::multiclass && n_classes < 2) fail("multiclass head needs >= 2 classes");
  if (!(norm_epsilon > 0.0)) fail("norm_epsilon must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels},
                     {"hidden", c.hidden},
                     {"num_layers", c.num_layers},
                     {"num_heads", c.num_heads},
                     {"ffn_dim", c.ffn_dim},
                     {"depthwise_kernel", c.depthwise_kernel},
                     {"dropout", c.dropout},
                     {"input_norm", to_string(c.input_norm)},
                     {"head", c.head == HeadKind::single_logit ? "single_logit" : "multiclass"},
                     {"n_classes", c.n_classes},
                     {"window_samples", c.window_samples},
                     {"projection_kernel", c.projection_kernel},
                     {"positional_encoding", c.positional_encoding},
                     {"norm_epsilon", c.norm_epsilon}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  // Missing keys keep the values already in `c` so presets can be overridden.
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("in_channels", c.in_channels);
  get("hidden", c.hidden);
  get("num_layers", c.num_layers);
  get("num_heads", c.num_heads);
  get("ffn_dim", c.ffn_dim);
  get("depthwise_kernel", c.depthwise_kernel);
  get("dropout", c.dropout);
  if (j.contains("input_norm")) c.input_norm = input_norm_from_string(j.at("input_norm").get<std::string>());
  if (j.contains("head")) {
    const auto h = j.at("head").get<std::string>();
    if (h == "single_logit") c.head = HeadKind::single_logit;
    else if (h == "multiclass") c.head = HeadKind::multiclass;
    else throw ContractError("unknown head '" + h + "'");
  }
  get("n_classes", c.n_classes);
  get("window_samples", c.window_samples);
  get("projection_kernel", c.projection_kernel);
  get("positional_encoding", c.positional_encoding);
  get("norm_epsilon", c.norm_epsilon);
}

namespace {

Tensor uniform_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

Tensor constant_param(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor::from_values(std::move(shape), std::vector<double>(n, value), true);
}

FeedForwardParams make_ffn(std::size_t h, std::size_t f, std::mt19937_64* rng) {
  FeedForwardParams p;
  p.norm_gain = constant_param({h}, 1.0);
  p.norm_bias = constant_param({h}, 0.0);
  p.w1 = rng ? uniform_param({f, h}, h, *rng) : constant_param({f, h}, 0.0);
  p.b1 = constant_param({f}, 0.0);
  p.w2 = rng ? uniform_param({h, f}, f, *rng) : constant_param({h, f}, 0.0);
  p.b2 = constant_param({h}, 0.0);
  return p;
}

BlockParams make_block(std::size_t h, std::size_t f, std::size_t k, std::mt19937_64* rng) {
  const auto weight = [&](Shape s, std::size_t fan_in) {
    return rng ? uniform_param(std::move(s), fan_in, *rng) : constant_param(std::move(s), 0.0);
  };
  BlockParams b;
  b.ffn1 = make_ffn(h, f, rng);
  auto& a = b.mhsa;
  a.norm_gain = constant_param({h}, 1.0);
  a.norm_bias = constant_param({h}, 0.0);
  a.wq = weight({h, h}, h);
  a.bq = constant_param({h}, 0.0);
  a.wk = weight({h, h}, h);
  a.bk = constant_param({h}, 0.0);
  a.wv = weight({h, h}, h);
  a.bv = constant_param({h}, 0.0);
  a.wo = weight({h, h}, h);
  a.bo = constant_param({h}, 0.0);
  auto& c = b.conv;
  c.norm_gain = constant_param({h}, 1.0);
  c.norm_bias = constant_param({h}, 0.0);
  c.pw1_w = weight({2 * h, h}, h);
  c.pw1_b = constant_param({2 * h}, 0.0);
  c.dw_w = weight({h, k}, k);
  c.dw_b = constant_param({h}, 0.0);
  c.cn_gain = constant_param({h}, 1.0);
  c.cn_bias = constant_param({h}, 0.0);
  c.pw2_w = weight({h, h}, h);
  c.pw2_b = constant_param({h}, 0.0);
  b.ffn2 = make_ffn(h, f, rng);
  b.final_gain = constant_param({h}, 1.0);
  b.final_bias = constant_param({h}, 0.0);
  return b;
}

void append_ffn(std::vector<Parameter>& out, const FeedForwardParams& p, const std::string& pre) {
  out.push_back({pre + ".norm.gain", p.norm_gain, false});
  out.push_back({pre + ".norm.bias", p.norm_bias, false});
  out.push_back({pre + ".w1", p.w1, true});
  out.push_back({pre + ".b1", p.b1, false});
  out.push_back({pre + ".w2", p.w2, true});
  out.push_back({pre + ".b2", p.b2, false});
}

void bind_ffn(FeedForwardParams& p, const std::map<std::string, Tensor>& m, const std::string& pre) {
  p.norm_gain = m.at(pre + ".norm.gain");
  p.norm_bias = m.at(pre + ".norm.bias");
  p.w1 = m.at(pre + ".w1");
  p.b1 = m.at(pre + ".b1");
  p.w2 = m.at(pre + ".w2");
  p.b2 = m.at(pre + ".b2");
}

void bind_block(BlockParams& b, const std::map<std::string, Tensor>& m, const std::string& pre) {
  bind_ffn(b.ffn1, m, pre + ".ffn1");
  auto& a = b.mhsa;
  a.norm_gain = m.at(pre + ".mhsa.norm.gain");
  a.norm_bias = m.at(pre + ".mhsa.norm.bias");
  a.wq = m.at(pre + ".mhsa.wq");
  a.bq = m.at(pre + ".mhsa.bq");
  a.wk = m.at(pre + ".mhsa.wk");
  a.bk = m.at(pre + ".mhsa.bk");
  a.wv = m.at(pre + ".mhsa.wv");
  a.bv = m.at(pre + ".mhsa.bv");
  a.wo = m.at(pre + ".mhsa.wo");
  a.bo = m.at(pre + ".mhsa.bo");
  auto& c = b.conv;
  c.norm_gain = m.at(pre + ".conv.norm.gain");
  c.norm_bias = m.at(pre + ".conv.norm.bias");
  c.pw1_w = m.at(pre + ".conv.pw1.weight");
  c.pw1_b = m.at(pre + ".conv.pw1.bias");
  c.dw_w = m.at(pre + ".conv.depthwise.weight");
  c.dw_b = m.at(pre + ".conv.depthwise.bias");
  c.cn_gain = m.at(pre + ".conv.channel_norm.gain");
  c.cn_bias = m.at(pre + ".conv.channel_norm.bias");
  c.pw2_w = m.at(pre + ".conv.pw2.weight");
  c.pw2_b = m.at(pre + ".conv.pw2.bias");
  bind_ffn(b.ffn2, m, pre + ".ffn2");
  b.final_gain = m.at(pre + ".final_norm.gain");
  b.final_bias = m.at(pre + ".final_norm.bias");
}

}  // namespace

BlockParams identity_block(std::size_t hidden, std::size_t ffn_dim, std::size_t kernel) {
  return make_block(hidden, ffn_dim, kernel, nullptr);
}

BlockParams random_block(std::size_t hidden, std::size_t ffn_dim, std::size_t kernel,
                         std::mt19937_64& rng) {
  return make_block(hidden, ffn_dim, kernel, &rng);
}

std::vector<Parameter> block_parameters(const BlockParams& b, const std::string& pre) {
  std::vector<Parameter> out;
  append_ffn(out, b.ffn1, pre + ".ffn1");
  const auto& a = b.mhsa;
  out.push_back({pre + ".mhsa.norm.gain", a.norm_gain, false});
  out.push_back({pre + ".mhsa.norm.bias", a.norm_bias, false});
  out.push_back({pre + ".mhsa.wq", a.wq, true});
  out.push_back({pre + ".mhsa.bq", a.bq, false});
  out.push_back({pre + ".mhsa.wk", a.wk, true});
  out.push_back({pre + ".mhsa.bk", a.bk, false});
  out.push_back({pre + ".mhsa.wv", a.wv, true});
  out.push_back({pre + ".mhsa.bv", a.bv, false});
  out.push_back({pre + ".mhsa.wo", a.wo, true});
  out.push_back({pre + ".mhsa.bo", a.bo, false});
  const auto& c = b.conv;
  out.push_back({pre + ".conv.norm.gain", c.norm_gain, false});
  out.push_back({pre + ".conv.norm.bias", c.norm_bias, false});
  out.push_back({pre + ".conv.pw1.weight", c.pw1_w, true});
  out.push_back({pre + ".conv.pw1.bias", c.pw1_b, false});
  out.push_back({pre + ".conv.depthwise.weight", c.dw_w, true});
  out.push_back({pre + ".conv.depthwise.bias", c.dw_b, false});
  out.push_back({pre + ".conv.channel_norm.gain", c.cn_gain, false});
  out.push_back({pre + ".conv.channel_norm.bias", c.cn_bias, false});
  out.push_back({pre + ".conv.pw2.weight", c.pw2_w, true});
  out.push_back({pre + ".conv.pw2.bias", c.pw2_b, false});
  append_ffn(out, b.ffn2, pre + ".ffn2");
  out.push_back({pre + ".final_norm.gain", b.final_gain, false});
  out.push_back({pre + ".final_norm.bias", b.final_bias, false});
  return out;
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p, const BlockOptions& opt,
                    Mode mode, std::mt19937_64* rng) {
  const bool train = mode == Mode::train;
  Tensor h = layer_norm(x, p.norm_gain, p.norm_bias, opt.eps);
  h = swish(linear(h, p.w1, p.b1));
  h = dropout(h, opt.dropout, train, rng);
  h = linear(h, p.w2, p.b2);
  return dropout(h, opt.dropout, train, rng);
}

Tensor self_attention(const Tensor& x, const AttentionParams& p, const BlockOptions& opt,
                      Mode mode, std::mt19937_64* rng) {
  const std::size_t B = x.dim(0), T = x.dim(1), H = x.dim(2);
  const std::size_t heads = opt.num_heads;
  if (H % heads != 0) throw ContractError("attention: hidden not divisible by heads");
  const std::size_t dh = H / heads;
  Tensor h = layer_norm(x, p.norm_gain, p.norm_bias, opt.eps);
  const auto split = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {B, T, heads, dh}), {0, 2, 1, 3}), {B * heads, T, dh});
  };
  Tensor q = split(linear(h, p.wq, p.bq));
  Tensor k = split(linear(h, p.wk, p.bk));
  Tensor v = split(linear(h, p.wv, p.bv));
  Tensor scores = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor ctx = bmm(softmax(scores), v);
  ctx = reshape(permute(reshape(ctx, {B, heads, T, dh}), {0, 2, 1, 3}), {B, T, H});
  Tensor out = linear(ctx, p.wo, p.bo);
  return dropout(out, opt.dropout, mode == Mode::train, rng);
}

Tensor conv_module(const Tensor& x, const ConvModuleParams& p, const BlockOptions& opt,
                   Mode mode, std::mt19937_64* rng) {
  Tensor h = layer_norm(x, p.norm_gain, p.norm_bias, opt.eps);
  h = glu(linear(h, p.pw1_w, p.pw1_b));
  h = depthwise_conv1d(h, p.dw_w, p.dw_b);
  // Per-sample, per-channel statistics over time; no batch statistics.
  h = permute(normalize_lastdim(permute(h, {0, 2, 1}), opt.eps), {0, 2, 1});
  h = affine_lastdim(h, p.cn_gain, p.cn_bias);
  h = swish(h);
  h = linear(h, p.pw2_w, p.pw2_b);
  return dropout(h, opt.dropout, mode == Mode::train, rng);
}

Tensor conformer_block(const Tensor& x, const BlockParams& p, const BlockOptions& opt, Mode mode,
                       std::mt19937_64* rng) {
  if (x.rank() != 3) throw ContractError("conformer_block: expects [B, T, H]");
  if (x.dim(2) != p.final_gain.numel()) {
    throw ContractError("conformer_block: hidden size " + std::to_string(x.dim(2)) +
                        " does not match parameters (" + std::to_string(p.final_gain.numel()) + ")");
  }
  Tensor h = add(x, scale(feed_forward(x, p.ffn1, opt, mode, rng), 0.5));
  h = add(h, self_attention(h, p.mhsa, opt, mode, rng));
  h = add(h, conv_module(h, p.conv, opt, mode, rng));
  h = add(h, scale(feed_forward(h, p.ffn2, opt, mode, rng), 0.5));
  return layer_norm(h, p.final_gain, p.final_bias, opt.eps);
}

ConformerModel ConformerModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ConformerModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  const std::size_t C = config.in_channels, H = config.hidden, K = config.projection_kernel;
  m.params_.push_back({"proj.weight", uniform_param({H, C, K}, C * K, rng), true});
  m.params_.push_back({"proj.bias", constant_param({H}, 0.0), false});
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    auto block = random_block(H, config.ffn_dim, config.depthwise_kernel, rng);
    auto ps = block_parameters(block, "blocks." + std::to_string(i));
    m.params_.insert(m.params_.end(), ps.begin(), ps.end());
  }
  m.params_.push_back({"final_norm.gain", constant_param({H}, 1.0), false});
  m.params_.push_back({"final_norm.bias", constant_param({H}, 0.0), false});
  const std::size_t out = config.output_dim();
  m.params_.push_back({"head.weight", uniform_param({out, H}, H, rng), true});
  m.params_.push_back({"head.bias", constant_param({out}, 0.0), false});
  if (config.input_norm == InputNorm::batch) {
    m.buffers_.push_back({"input_norm.running_mean", Tensor::zeros({C}), false});
    m.buffers_.push_back({"input_norm.running_var",
                          Tensor::from_values({C}, std::vector<double>(C, 1.0)), false});
  }
  m.rebuild_views();
  return m;
}

void ConformerModel::rebuild_views() {
  std::map<std::string, Tensor> by_name;
  for (const auto& p : params_) by_name.emplace(p.name, p.tensor);
  for (const auto& p : buffers_) by_name.emplace(p.name, p.tensor);
  proj_w_ = by_name.at("proj.weight");
  proj_b_ = by_name.at("proj.bias");
  blocks_.assign(config_.num_layers, BlockParams{});
  for (std::size_t i = 0; i < config_.num_layers; ++i) {
    bind_block(blocks_[i], by_name, "blocks." + std::to_string(i));
  }
  final_gain_ = by_name.at("final_norm.gain");
  final_bias_ = by_name.at("final_norm.bias");
  head_w_ = by_name.at("head.weight");
  head_b_ = by_name.at("head.bias");
  if (config_.input_norm == InputNorm::batch) {
    running_mean_ = by_name.at("input_norm.running_mean");
    running_var_ = by_name.at("input_norm.running_var");
  }
}

Tensor ConformerModel::encode(const Tensor& batch, Mode mode, std::mt19937_64* rng) {
  const auto& c = config_;
  if (batch.rank() != 3 || batch.dim(1) != c.in_channels || batch.dim(2) != c.window_samples) {
    throw ContractError("forward: expected [B, " + std::to_string(c.in_channels) + ", " +
                        std::to_string(c.window_samples) + "], got " + shape_string(batch.shape()));
  }
  const std::size_t B = batch.dim(0), C = c.in_channels, T = c.window_samples;
  const bool train = mode == Mode::train;
  Tensor x = batch;
  switch (c.input_norm) {
    case InputNorm::none: break;
    case InputNorm::instance: x = normalize_lastdim(x, c.norm_epsilon); break;
    case InputNorm::layer:
      x = reshape(normalize_lastdim(reshape(x, {B, C * T}), c.norm_epsilon), {B, C, T});
      break;
    case InputNorm::batch: {
      if (train) {
        Tensor per_channel = reshape(permute(x, {1, 0, 2}), {C, B * T});
        const auto v = x.values();
        const double n = static_cast<double>(B * T);
        auto rm = running_mean_.mutable_values();
        auto rv = running_var_.mutable_values();
        for (std::size_t ch = 0; ch < C; ++ch) {
          double mean = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t) mean += v[(b * C + ch) * T + t];
          mean /= n;
          double var = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t) {
              const double d = v[(b * C + ch) * T + t] - mean;
              var += d * d;
            }
          const double unbiased = n > 1.0 ? var / (n - 1.0) : 0.0;
          rm[ch] = 0.9 * rm[ch] + 0.1 * mean;
          rv[ch] = 0.9 * rv[ch] + 0.1 * unbiased;
        }
        x = permute(reshape(normalize_lastdim(per_channel, c.norm_epsilon), {C, B, T}), {1, 0, 2});
      } else {
        std::vector<double> gain(C), bias(C);
        const auto rm = running_mean_.values();
        const auto rv = running_var_.values();
        for (std::size_t ch = 0; ch < C; ++ch) {
          gain[ch] = 1.0 / std::sqrt(rv[ch] + c.norm_epsilon);
          bias[ch] = -rm[ch] * gain[ch];
        }
        Tensor g = Tensor::from_values({C}, std::move(gain));
        Tensor b = Tensor::from_values({C}, std::move(bias));
        x = permute(affine_lastdim(permute(x, {0, 2, 1}), g, b), {0, 2, 1});
      }
      break;
    }
  }
  x = conv1d(x, proj_w_, proj_b_, 1, c.projection_kernel / 2);
  x = permute(x, {0, 2, 1});
  if (c.positional_encoding) x = add(x, sinusoidal_positions(T, c.hidden));
  x = dropout(x, c.dropout, train, rng);
  const BlockOptions opt{c.num_heads, c.dropout, c.norm_epsilon};
  for (const auto& block : blocks_) x = conformer_block(x, block, opt, mode, rng);
  return layer_norm(x, final_gain_, final_bias_, c.norm_epsilon);
}

Tensor ConformerModel::head(const Tensor& encoded) const {
  return linear(mean_pool_time(encoded), head_w_, head_b_);
}

Tensor ConformerModel::forward(const Tensor& batch, Mode mode, std::mt19937_64* rng) {
  return head(encode(batch, mode, rng));
}

Tensor ConformerModel::predict(const Tensor& batch) const {
  NoGradGuard guard;
  // Eval mode touches no parameter or buffer.
  return const_cast<ConformerModel*>(this)->forward(batch, Mode::eval, nullptr);
}

std::size_t ConformerModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ConformerModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

ConformerModel ConformerModel::clone() const {
  ConformerModel m;
  m.config_ = config_;
  for (const auto& p : params_) m.params_.push_back({p.name, p.tensor.clone_leaf(), p.decay});
  for (const auto& p : buffers_) m.buffers_.push_back({p.name, p.tensor.clone_leaf(), p.decay});
  if (!m.params_.empty()) m.rebuild_views();
  return m;
}

void ConformerModel::load_values(const ConformerModel& other) {
  if (!(other.config_ == config_) || other.params_.size() != params_.size() ||
      other.buffers_.size() != buffers_.size()) {
    throw ContractError("load_values: model structure mismatch");
  }
  const auto copy = [](std::vector<Parameter>& dst, const std::vector<Parameter>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto out = dst[i].tensor.mutable_values();
      auto in = src[i].tensor.values();
      std::copy(in.begin(), in.end(), out.begin());
    }
  };
  copy(params_, other.params_);
  copy(buffers_, other.buffers_);
}

}  // namespace megc::nn
