// SPDX-License-Identifier: Apache-2.0
//
// Conformer encoder with a convolutional input projection and a task head.
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "megc/tensor.hpp"

namespace megc::nn {

enum class InputNorm { none, instance, batch, layer };
enum class HeadKind { single_logit, multiclass };
enum class Mode { train, eval };

std::string to_string(InputNorm n);
InputNorm input_norm_from_string(const std::string& s);

struct ModelConfig {
  std::size_t in_channels = 306;
  std::size_t hidden = 144;
  std::size_t num_layers = 16;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 576;
  std::size_t depthwise_kernel = 31;
  double dropout = 0.1;
  InputNorm input_norm = InputNorm::none;
  HeadKind head = HeadKind::single_logit;
  std::size_t n_classes = 2;  // classes of the multiclass head; ignored for single_logit
  std::size_t window_samples = 625;
  std::size_t projection_kernel = 3;
  bool positional_encoding = true;
  double norm_epsilon = 1e-5;

  /// 16 layers, 4 heads, FFN 576, kernel 31, 625-sample window, single logit.
  static ModelConfig speech_paper();
  /// 7 layers, 12 heads, FFN 2048, kernel 127, 125-sample window, 39 classes,
  /// instance input normalization.
  static ModelConfig phoneme_paper();
  /// Desk-scale counterparts: 16 channels, hidden 32, 2 layers.
  static ModelConfig speech_desk();
  static ModelConfig phoneme_desk(std::size_t n_classes = 4);

  std::size_t output_dim() const { return head == HeadKind::single_logit ? 1 : n_classes; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct Parameter {
  std::string name;
  Tensor tensor;
  bool decay = false;  // weight decay applies (matrices and kernels only)
};

struct FeedForwardParams {
  Tensor norm_gain, norm_bias, w1, b1, w2, b2;
};

struct AttentionParams {
  Tensor norm_gain, norm_bias, wq, bq, wk, bk, wv, bv, wo, bo;
};

struct ConvModuleParams {
  Tensor norm_gain, norm_bias;
  Tensor pw1_w, pw1_b;  // hidden -> 2*hidden
  Tensor dw_w, dw_b;    // depthwise [hidden, kernel]
  Tensor cn_gain, cn_bias;
  Tensor pw2_w, pw2_b;  // hidden -> hidden
};

struct BlockParams {
  FeedForwardParams ffn1;
  AttentionParams mhsa;
  ConvModuleParams conv;
  FeedForwardParams ffn2;
  Tensor final_gain, final_bias;
};

struct BlockOptions {
  std::size_t num_heads = 1;
  double dropout = 0.0;
  double eps = 1e-5;
};

/// Macaron block: x + 1/2 FFN, + MHSA, + Conv, + 1/2 FFN, then LayerNorm.
/// x is [B, T, H].
Tensor conformer_block(const Tensor& x, const BlockParams& p, const BlockOptions& opt, Mode mode,
                       std::mt19937_64* rng);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p, const BlockOptions& opt,
                    Mode mode, std::mt19937_64* rng);
Tensor self_attention(const Tensor& x, const AttentionParams& p, const BlockOptions& opt,
                      Mode mode, std::mt19937_64* rng);
Tensor conv_module(const Tensor& x, const ConvModuleParams& p, const BlockOptions& opt,
                   Mode mode, std::mt19937_64* rng);

/// Block parameters with every weight zero and every norm gain 1.
BlockParams identity_block(std::size_t hidden, std::size_t ffn_dim, std::size_t kernel);
/// Block parameters drawn with the same initializer as the model.
BlockParams random_block(std::size_t hidden, std::size_t ffn_dim, std::size_t kernel,
                         std::mt19937_64& rng);
std::vector<Parameter> block_parameters(const BlockParams& p, const std::string& prefix);

class ConformerModel {
 public:
  ConformerModel() = default;

  /// Deterministic in `seed`. Linear and conv weights are U(-1/sqrt(fan_in),
  /// 1/sqrt(fan_in)); biases 0; norm gains 1.
  static ConformerModel init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// batch[B, in_channels, window_samples] -> logits[B, output_dim].
  Tensor forward(const Tensor& batch, Mode mode, std::mt19937_64* rng = nullptr);
  /// Encoder output before pooling: [B, T, hidden].
  Tensor encode(const Tensor& batch, Mode mode, std::mt19937_64* rng = nullptr);
  /// Eval-mode logits without graph recording. Safe to call concurrently.
  Tensor predict(const Tensor& batch) const;
  /// Pooling plus classifier head over an encoded [B, T, hidden] sequence.
  Tensor head(const Tensor& encoded) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Non-trainable state (batch-norm running statistics).
  std::vector<Parameter>& buffers() { return buffers_; }
  const std::vector<Parameter>& buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  void zero_grad();
  /// Independent copy with identical values.
  ConformerModel clone() const;
  /// Copies values from `other` (same config) into this model.
  void load_values(const ConformerModel& other);

 private:
  void rebuild_views();

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;

  Tensor proj_w_, proj_b_;
  std::vector<BlockParams> blocks_;
  Tensor final_gain_, final_bias_;
  Tensor head_w_, head_b_;
  Tensor running_mean_, running_var_;
};

}  // namespace megc::nn
