// SPDX-License-Identifier: Apache-2.0
#include "megc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "megc/error.hpp"

namespace megc::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using detail::make_result;
using detail::wants_grad;

void check(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  check(sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin()),
        "add: shape " + shape_string(sb) + " does not broadcast onto " + shape_string(sa));
  const std::size_t inner = b.numel();
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.begin(), av.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  return make_result(sa, std::move(out), {a, b}, [inner](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % inner] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& pa = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += factor * self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.values[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check(w.rank() == 2, "linear: weight must be rank 2");
  check(x.rank() >= 1, "linear: input must have rank >= 1");
  const std::size_t in = w.dim(1);
  const std::size_t out_dim = w.dim(0);
  check(x.shape().back() == in, "linear: input features " + std::to_string(x.shape().back()) +
                                    " != weight input " + std::to_string(in));
  const bool has_bias = bias.defined();
  if (has_bias) check(bias.numel() == out_dim, "linear: bias length mismatch");
  const std::size_t rows = x.numel() / in;

  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  {
    ConstMapMat X(x.values().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(in));
    ConstMapMat W(w.values().data(), static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in));
    MapMat Y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_dim));
    Y.noalias() = X * W.transpose();
    if (has_bias) {
      const auto bv = bias.values();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bv[o];
      }
    }
  }
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(shape), std::move(out), std::move(parents),
                     [rows, in, out_dim, has_bias](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const auto R = static_cast<Eigen::Index>(rows);
    const auto I = static_cast<Eigen::Index>(in);
    const auto O = static_cast<Eigen::Index>(out_dim);
    ConstMapMat dY(self.grad.data(), R, O);
    if (px.requires_grad) {
      ConstMapMat W(pw.values.data(), O, I);
      MapMat dX(px.grad.data(), R, I);
      dX.noalias() += dY * W;
    }
    if (pw.requires_grad) {
      ConstMapMat X(px.values.data(), R, I);
      MapMat dW(pw.grad.data(), O, I);
      dW.noalias() += dY.transpose() * X;
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& pb = *self.parents[2];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) pb.grad[o] += self.grad[r * out_dim + o];
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  check(a.rank() == 3 && b.rank() == 3, "bmm: operands must be rank 3");
  const std::size_t n = a.dim(0), m = a.dim(1), k = a.dim(2);
  check(b.dim(0) == n, "bmm: batch mismatch");
  const std::size_t p = transpose_b ? b.dim(1) : b.dim(2);
  check((transpose_b ? b.dim(2) : b.dim(1)) == k, "bmm: inner dimension mismatch");
  std::vector<double> out(n * m * p);
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto P = static_cast<Eigen::Index>(p);
  for (std::size_t i = 0; i < n; ++i) {
    ConstMapMat A(a.values().data() + i * m * k, M, K);
    MapMat C(out.data() + i * m * p, M, P);
    if (transpose_b) {
      ConstMapMat B(b.values().data() + i * p * k, P, K);
      C.noalias() = A * B.transpose();
    } else {
      ConstMapMat B(b.values().data() + i * k * p, K, P);
      C.noalias() = A * B;
    }
  }
  return make_result({n, m, p}, std::move(out), {a, b}, [n, M, K, P, transpose_b](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto mk = static_cast<std::size_t>(M * K);
    const auto kp = static_cast<std::size_t>(K * P);
    const auto mp = static_cast<std::size_t>(M * P);
    for (std::size_t i = 0; i < n; ++i) {
      ConstMapMat dC(self.grad.data() + i * mp, M, P);
      if (transpose_b) {
        // C = A B^T with B[P, K]
        if (pa.requires_grad) {
          ConstMapMat B(pb.values.data() + i * kp, P, K);
          MapMat dA(pa.grad.data() + i * mk, M, K);
          dA.noalias() += dC * B;
        }
        if (pb.requires_grad) {
          ConstMapMat A(pa.values.data() + i * mk, M, K);
          MapMat dB(pb.grad.data() + i * kp, P, K);
          dB.noalias() += dC.transpose() * A;
        }
      } else {
        if (pa.requires_grad) {
          ConstMapMat B(pb.values.data() + i * kp, K, P);
          MapMat dA(pa.grad.data() + i * mk, M, K);
          dA.noalias() += dC * B.transpose();
        }
        if (pb.requires_grad) {
          ConstMapMat A(pa.values.data() + i * mk, M, K);
          MapMat dB(pb.grad.data() + i * kp, K, P);
          dB.noalias() += A.transpose() * dC;
        }
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.numel(), "reshape: cannot view " + shape_string(x.shape()) +
                                             " as " + shape_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  check(axes.size() == r, "permute: axes rank mismatch");
  std::vector<bool> used(r, false);
  for (auto ax : axes) {
    check(ax < r && !used[ax], "permute: invalid axes");
    used[ax] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  // gather[j] = source offset of output element j
  const std::size_t n = x.numel();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < n; ++j) {
    gather[j] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = xv[gather[j]];
  return make_result(std::move(out_shape), std::move(out), {x},
                     [gather = std::move(gather)](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t j = 0; j < gather.size(); ++j) px.grad[gather[j]] += self.grad[j];
  });
}

Tensor softmax(const Tensor& x) {
  check(x.rank() >= 1, "softmax: rank 0 input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < d; ++i) o[i] /= s;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, d](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * d;
      const double* dy = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += dy[i] * y[i];
      for (std::size_t i = 0; i < d; ++i) px.grad[r * d + i] += y[i] * (dy[i] - dot);
    }
  });
}

Tensor normalize_lastdim(const Tensor& x, double eps) {
  check(x.rank() >= 1, "normalize: rank 0 input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(rows);
  const auto dn = static_cast<double>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= dn;
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= dn;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = (in[i] - mean) * inv_std[r];
  }
  return make_result(x.shape(), std::move(out), {x},
                     [rows, d, dn, inv_std = std::move(inv_std)](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * d;
      const double* dy = self.grad.data() + r * d;
      double mdy = 0.0, mdyy = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        mdy += dy[i];
        mdyy += dy[i] * y[i];
      }
      mdy /= dn;
      mdyy /= dn;
      for (std::size_t i = 0; i < d; ++i) {
        px.grad[r * d + i] += inv_std[r] * (dy[i] - mdy - y[i] * mdyy);
      }
    }
  });
}

Tensor affine_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t d = x.shape().back();
  check(gain.numel() == d && bias.numel() == d, "affine: gain/bias must match the last axis");
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto g = gain.values();
  const auto b = bias.values();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = xv[r * d + i] * g[i] + b[i];
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [rows, d](Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        const double dy = self.grad[r * d + i];
        if (px.requires_grad) px.grad[r * d + i] += dy * pg.values[i];
        if (pg.requires_grad) pg.grad[i] += dy * px.values[r * d + i];
        if (pb.requires_grad) pb.grad[i] += dy;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return affine_lastdim(normalize_lastdim(x, eps), gain, bias);
}

Tensor glu(const Tensor& x) {
  const std::size_t d2 = x.shape().back();
  check(d2 % 2 == 0, "glu: last axis must be even");
  const std::size_t d = d2 / 2;
  const std::size_t rows = x.numel() / d2;
  Shape shape = x.shape();
  shape.back() = d;
  const auto xv = x.values();
  std::vector<double> out(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = xv[r * d2 + i] * sigmoid_scalar(xv[r * d2 + d + i]);
    }
  }
  return make_result(std::move(shape), std::move(out), {x}, [rows, d, d2](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        const double a = px.values[r * d2 + i];
        const double s = sigmoid_scalar(px.values[r * d2 + d + i]);
        const double dy = self.grad[r * d + i];
        px.grad[r * d2 + i] += dy * s;
        px.grad[r * d2 + d + i] += dy * a * s * (1.0 - s);
      }
    }
  });
}

Tensor swish(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sigmoid_scalar(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = sigmoid_scalar(px.values[i]);
      px.grad[i] += self.grad[i] * (s + px.values[i] * s * (1.0 - s));
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.values[i];
      px.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  check(x.rank() == 3 && w.rank() == 3, "conv1d: expects x[B,Cin,T] and w[Cout,Cin,K]");
  check(stride >= 1, "conv1d: stride must be >= 1");
  const std::size_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  check(w.dim(1) == Cin, "conv1d: input channels " + std::to_string(Cin) + " != weight channels " +
                             std::to_string(w.dim(1)));
  const bool has_bias = bias.defined();
  if (has_bias) check(bias.numel() == Cout, "conv1d: bias length mismatch");
  const std::size_t Tout = conv1d_out_len(T + 2 * padding, K, stride);
  check(Tout > 0, "conv1d: input shorter than kernel");
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> out(B * Cout * Tout, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      double* y = out.data() + (b * Cout + o) * Tout;
      if (has_bias) std::fill(y, y + Tout, bias.values()[o]);
      for (std::size_t c = 0; c < Cin; ++c) {
        const double* xr = xv.data() + (b * Cin + c) * T;
        const double* wr = wv.data() + (o * Cin + c) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double wk = wr[k];
          for (std::size_t t = 0; t < Tout; ++t) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                       static_cast<std::ptrdiff_t>(padding);
            if (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) y[t] += wk * xr[src];
          }
        }
      }
    }
  }
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return make_result({B, Cout, Tout}, std::move(out), std::move(parents),
                     [B, Cin, T, Cout, K, Tout, stride, padding, has_bias](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < Cout; ++o) {
        const double* dy = self.grad.data() + (b * Cout + o) * Tout;
        if (has_bias && self.parents[2]->requires_grad) {
          auto& pb = *self.parents[2];
          for (std::size_t t = 0; t < Tout; ++t) pb.grad[o] += dy[t];
        }
        for (std::size_t c = 0; c < Cin; ++c) {
          const std::size_t xoff = (b * Cin + c) * T;
          const std::size_t woff = (o * Cin + c) * K;
          for (std::size_t k = 0; k < K; ++k) {
            double dw = 0.0;
            for (std::size_t t = 0; t < Tout; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                         static_cast<std::ptrdiff_t>(padding);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
              dw += dy[t] * px.values[xoff + static_cast<std::size_t>(src)];
              if (px.requires_grad) px.grad[xoff + static_cast<std::size_t>(src)] += dy[t] * pw.values[woff + k];
            }
            if (pw.requires_grad) pw.grad[woff + k] += dw;
          }
        }
      }
    }
  });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check(x.rank() == 3 && w.rank() == 2, "depthwise_conv1d: expects x[B,T,C] and w[C,K]");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  const std::size_t K = w.dim(1);
  check(w.dim(0) == C, "depthwise_conv1d: channel mismatch");
  check(K % 2 == 1, "depthwise_conv1d: kernel must be odd");
  check(bias.numel() == C, "depthwise_conv1d: bias length mismatch");
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = bias.values();
  std::vector<double> out(B * T * C);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double* y = out.data() + (b * T + t) * C;
      for (std::size_t c = 0; c < C; ++c) y[c] = bv[c];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* xr = xv.data() + (b * T + static_cast<std::size_t>(src)) * C;
        for (std::size_t c = 0; c < C; ++c) y[c] += wv[c * K + k] * xr[c];
      }
    }
  }
  return make_result({B, T, C}, std::move(out), {x, w, bias}, [B, T, C, K, pad](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* dy = self.grad.data() + (b * T + t) * C;
        if (pb.requires_grad) {
          for (std::size_t c = 0; c < C; ++c) pb.grad[c] += dy[c];
        }
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          const std::size_t xo = (b * T + static_cast<std::size_t>(src)) * C;
          for (std::size_t c = 0; c < C; ++c) {
            if (px.requires_grad) px.grad[xo + c] += dy[c] * pw.values[c * K + k];
            if (pw.requires_grad) pw.grad[c * K + k] += dy[c] * px.values[xo + c];
          }
        }
      }
    }
  });
}

Tensor mean_pool_time(const Tensor& x) {
  check(x.rank() == 3, "mean_pool_time: expects x[B,T,H]");
  const std::size_t B = x.dim(0), T = x.dim(1), H = x.dim(2);
  const auto xv = x.values();
  std::vector<double> out(B * H, 0.0);
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) out[b * H + h] += xv[(b * T + t) * H + h];
    }
    for (std::size_t h = 0; h < H; ++h) out[b * H + h] *= inv;
  }
  return make_result({B, H}, std::move(out), {x}, [B, T, H, inv](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t h = 0; h < H; ++h) px.grad[(b * T + t) * H + h] += self.grad[b * H + h] * inv;
      }
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng) {
  check(p >= 0.0 && p < 1.0, "dropout: probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  check(rng != nullptr, "dropout: training mode requires an rng");
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(*rng) ? s : 0.0;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < mask.size(); ++i) px.grad[i] += self.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({1}, {s}, {x}, [](Node& self) {
    auto& px = *self.parents[0];
    for (double& g : px.grad) g += self.grad[0];
  });
}

Tensor weighted_sum(const Tensor& x, const std::vector<double>& weights) {
  check(weights.size() == x.numel(), "weighted_sum: weight count mismatch");
  const auto xv = x.values();
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += xv[i] * weights[i];
  return make_result({1}, {s}, {x}, [weights](Node& self) {
    auto& px = *self.parents[0];
    for (std::size_t i = 0; i < weights.size(); ++i) px.grad[i] += self.grad[0] * weights[i];
  });
}

std::size_t conv1d_out_len(std::size_t in_len, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ContractError("conv1d_out_len: kernel and stride must be >= 1");
  if (in_len < kernel) return 0;
  return (in_len - kernel) / stride + 1;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t hidden) {
  std::vector<double> pe(length * hidden);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < hidden; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(hidden));
      const double angle = static_cast<double>(t) * freq;
      pe[t * hidden + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_values({length, hidden}, std::move(pe));
}

}  // namespace megc::nn
