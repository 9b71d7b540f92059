// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor primitives used by the Conformer encoder.
#pragma once

#include <random>
#include <vector>

#include "megc/tensor.hpp"

namespace megc::nn {

/// a + b, where b's shape equals a's shape or a trailing suffix of it.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Element-wise product of same-shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);

/// x[..., in] * w[out, in]^T + bias[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
/// Batched product of a[N, m, k] with b[N, k, n] (or b[N, n, k] transposed).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

Tensor softmax(const Tensor& x);
/// (x - mean) / sqrt(var + eps) along the last axis, population variance.
Tensor normalize_lastdim(const Tensor& x, double eps = 1e-5);
/// x * gain + bias broadcast over the last axis.
Tensor affine_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Gated linear unit over the last axis: first half * sigmoid(second half).
Tensor glu(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// x[B, Cin, T] with w[Cout, Cin, K] and bias[Cout]; zero padding `padding`
/// on both ends. Output length = floor((T + 2 padding - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// Time-major depthwise convolution: x[B, T, C], w[C, K] (K odd), bias[C];
/// same-length output.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

/// x[B, T, H] -> [B, H], mean over T.
Tensor mean_pool_time(const Tensor& x);

/// Inverted dropout. Identity when !train or p == 0; `rng` required otherwise.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng);

/// Sum of all elements as a one-element tensor.
Tensor sum(const Tensor& x);
/// sum(x * weights) with constant weights.
Tensor weighted_sum(const Tensor& x, const std::vector<double>& weights);

/// Valid (unpadded) convolution output length; 0 when in_len < kernel.
std::size_t conv1d_out_len(std::size_t in_len, std::size_t kernel, std::size_t stride);

/// Sinusoidal absolute positional encoding, shape [T, H].
Tensor sinusoidal_positions(std::size_t length, std::size_t hidden);

}  // namespace megc::nn
