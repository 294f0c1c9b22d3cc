/* Copyright 2026 The n2n Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "n2n/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "n2n/parallel.hpp"

namespace n2n {

std::size_t Tensor::checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor shape has a zero extent");
    n *= e;
  }
  return n;
}

Tensor Tensor::full(std::vector<std::size_t> shape, Dtype dtype, double value) {
  Tensor t(std::move(shape), dtype);
  if (dtype == Dtype::f32) {
    std::fill(t.f32_.begin(), t.f32_.end(), float(value));
  } else {
    std::fill(t.f64_.begin(), t.f64_.end(), value);
  }
  return t;
}

double Tensor::get(std::size_t i) const {
  return dtype_ == Dtype::f32 ? double(f32_.at(i)) : f64_.at(i);
}

void Tensor::set(std::size_t i, double value) {
  if (dtype_ == Dtype::f32) {
    f32_.at(i) = float(value);
  } else {
    f64_.at(i) = value;
  }
}

Tensor Tensor::astype(Dtype target) const {
  if (target == dtype_) return *this;
  Tensor out(shape_, target);
  const std::size_t n = numel();
  if (target == Dtype::f64) {
    auto dst = out.data<double>();
    auto src = data<float>();
    for (std::size_t i = 0; i < n; ++i) dst[i] = double(src[i]);
  } else {
    auto dst = out.data<float>();
    auto src = data<double>();
    for (std::size_t i = 0; i < n; ++i) dst[i] = float(src[i]);
  }
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void ConvGeometry::validate() const {
  if (kernel_h == 0 || kernel_w == 0 || stride_h == 0 || stride_w == 0 ||
      in_channels == 0 || out_channels == 0) {
    throw ShapeError("conv geometry fields must be positive");
  }
}

namespace {

void require_dtype_match(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch (" +
                     dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()) + ")");
  }
}

template <typename T>
void matmul_impl(const Tensor& a, const Tensor& b, Tensor& c, std::size_t m,
                 std::size_t n, std::size_t p) {
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  auto pc = c.data<T>();
  // Grain sized so each chunk carries enough arithmetic to beat the cost
  // of spawning a worker.
  const std::size_t grain = std::max<std::size_t>(1, 200000 / (n * p + 1));
  parallel_for(m, grain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* crow = pc.data() + i * p;
      // k ascends for every (i,j), matching the plain triple loop exactly.
      for (std::size_t k = 0; k < n; ++k) {
        const T aik = pa[i * n + k];
        const T* brow = pb.data() + k * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
      }
    }
  });
}

template <typename T>
void matmul_tn_impl(const Tensor& a, const Tensor& b, Tensor& c, std::size_t m,
                    std::size_t n, std::size_t p) {
  auto pa = a.data<T>();  // [n x m]
  auto pb = b.data<T>();  // [n x p]
  auto pc = c.data<T>();  // [m x p]
  parallel_for(m, 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* crow = pc.data() + i * p;
      for (std::size_t k = 0; k < n; ++k) {
        const T aki = pa[k * m + i];
        const T* brow = pb.data() + k * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
      }
    }
  });
}

template <typename T>
void matmul_nt_impl(const Tensor& a, const Tensor& b, Tensor& c, std::size_t m,
                    std::size_t n, std::size_t p) {
  auto pa = a.data<T>();  // [m x n]
  auto pb = b.data<T>();  // [p x n]
  auto pc = c.data<T>();  // [m x p]
  parallel_for(m, 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const T* arow = pa.data() + i * n;
      T* crow = pc.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) {
        const T* brow = pb.data() + j * n;
        T acc = 0;
        for (std::size_t k = 0; k < n; ++k) acc += arow[k] * brow[k];
        crow[j] = acc;
      }
    }
  });
}

template <typename T>
void conv2d_impl(const Tensor& input, const Tensor& kernel, Tensor& out,
                 const ConvGeometry& g, std::size_t N, std::size_t C,
                 std::size_t H, std::size_t W, std::size_t K, std::size_t OH,
                 std::size_t OW) {
  auto px = input.data<T>();
  auto pw = kernel.data<T>();
  auto py = out.data<T>();
  const std::size_t kh = g.kernel_h, kw = g.kernel_w;
  const std::size_t ops_per_item = C * kh * kw * OH * OW;
  const std::size_t grain = std::max<std::size_t>(1, 200000 / (ops_per_item + 1));
  parallel_for(N * K, grain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t nk = lo; nk < hi; ++nk) {
      const std::size_t n = nk / K, k = nk % K;
      const T* xin = px.data() + n * C * H * W;
      const T* wk = pw.data() + k * C * kh * kw;
      T* yout = py.data() + (n * K + k) * OH * OW;
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          // Accumulation order (c, kh, kw) is the reference order.
          T acc = 0;
          const std::ptrdiff_t base_h =
              std::ptrdiff_t(oh * g.stride_h) - std::ptrdiff_t(g.pad_h);
          const std::ptrdiff_t base_w =
              std::ptrdiff_t(ow * g.stride_w) - std::ptrdiff_t(g.pad_w);
          for (std::size_t c = 0; c < C; ++c) {
            const T* xc = xin + c * H * W;
            const T* wc = wk + c * kh * kw;
            for (std::size_t r = 0; r < kh; ++r) {
              const std::ptrdiff_t ih = base_h + std::ptrdiff_t(r);
              if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
              for (std::size_t s = 0; s < kw; ++s) {
                const std::ptrdiff_t iw = base_w + std::ptrdiff_t(s);
                if (iw < 0 || iw >= std::ptrdiff_t(W)) continue;
                acc += xc[std::size_t(ih) * W + std::size_t(iw)] * wc[r * kw + s];
              }
            }
          }
          yout[oh * OW + ow] = acc;
        }
      }
    }
  });
}

template <typename T, typename F>
Tensor map_unary(const Tensor& t, F f) {
  Tensor out(t.shape(), t.dtype());
  auto src = t.data<T>();
  auto dst = out.data<T>();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 operands, got " + a.shape_str() +
                     " and " + b.shape_str());
  }
  require_dtype_match(a, b, "matmul");
  const std::size_t m = a.extent(0), n = a.extent(1), p = b.extent(1);
  if (b.extent(0) != n) {
    throw ShapeError("matmul: inner extents differ: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor c({m, p}, a.dtype());
  if (a.dtype() == Dtype::f32) {
    matmul_impl<float>(a, b, c, m, n, p);
  } else {
    matmul_impl<double>(a, b, c, m, n, p);
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
    throw ShapeError("matmul_tn: bad shapes " + a.shape_str() + " and " +
                     b.shape_str());
  }
  require_dtype_match(a, b, "matmul_tn");
  const std::size_t n = a.extent(0), m = a.extent(1), p = b.extent(1);
  Tensor c({m, p}, a.dtype());
  if (a.dtype() == Dtype::f32) {
    matmul_tn_impl<float>(a, b, c, m, n, p);
  } else {
    matmul_tn_impl<double>(a, b, c, m, n, p);
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1)) {
    throw ShapeError("matmul_nt: bad shapes " + a.shape_str() + " and " +
                     b.shape_str());
  }
  require_dtype_match(a, b, "matmul_nt");
  const std::size_t m = a.extent(0), n = a.extent(1), p = b.extent(0);
  Tensor c({m, p}, a.dtype());
  if (a.dtype() == Dtype::f32) {
    matmul_nt_impl<float>(a, b, c, m, n, p);
  } else {
    matmul_nt_impl<double>(a, b, c, m, n, p);
  }
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvGeometry& g) {
  g.validate();
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: expects input [N,C,H,W] and kernel [K,C,kh,kw]");
  }
  require_dtype_match(input, kernel, "conv2d");
  const std::size_t N = input.extent(0), C = input.extent(1),
                    H = input.extent(2), W = input.extent(3);
  const std::size_t K = kernel.extent(0);
  if (kernel.extent(1) != C || g.in_channels != C) {
    throw ShapeError("conv2d: channel mismatch: input has " + std::to_string(C) +
                     " channels, kernel expects " +
                     std::to_string(kernel.extent(1)));
  }
  if (kernel.extent(2) != g.kernel_h || kernel.extent(3) != g.kernel_w ||
      g.out_channels != K) {
    throw ShapeError("conv2d: kernel tensor disagrees with geometry");
  }
  const std::size_t OH = g.out_h(H), OW = g.out_w(W);
  Tensor out({N, K, OH, OW}, input.dtype());
  if (input.dtype() == Dtype::f32) {
    conv2d_impl<float>(input, kernel, out, g, N, C, H, W, K, OH, OW);
  } else {
    conv2d_impl<double>(input, kernel, out, g, N, C, H, W, K, OH, OW);
  }
  return out;
}

Tensor relu(const Tensor& t) {
  if (t.dtype() == Dtype::f32) {
    return map_unary<float>(t, [](float x) { return x > 0.0f ? x : 0.0f; });
  }
  return map_unary<double>(t, [](double x) { return x > 0.0 ? x : 0.0; });
}

namespace {

// Channel axis layout: [pre][channels][post] where pre is the batch for
// rank >= 2 tensors and 1 for rank-1, post is the spatial volume.
struct ChannelLayout {
  std::size_t pre, channels, post;
};

ChannelLayout channel_layout(const Tensor& t) {
  if (t.rank() == 1) return {1, t.extent(0), 1};
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < t.rank(); ++ax) post *= t.extent(ax);
  return {t.extent(0), t.extent(1), post};
}

template <typename T>
Tensor maxout_impl(const Tensor& t, std::size_t pieces) {
  const ChannelLayout l = channel_layout(t);
  std::vector<std::size_t> out_shape = t.shape();
  out_shape[t.rank() == 1 ? 0 : 1] = l.channels / pieces;
  Tensor out(out_shape, t.dtype());
  auto src = t.data<T>();
  auto dst = out.data<T>();
  const std::size_t out_c = l.channels / pieces;
  for (std::size_t b = 0; b < l.pre; ++b) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      for (std::size_t s = 0; s < l.post; ++s) {
        T best = src[(b * l.channels + oc * pieces) * l.post + s];
        for (std::size_t p = 1; p < pieces; ++p) {
          const T v = src[(b * l.channels + oc * pieces + p) * l.post + s];
          if (v > best) best = v;
        }
        dst[(b * out_c + oc) * l.post + s] = best;
      }
    }
  }
  return out;
}

template <typename T>
Tensor add_bias_impl(const Tensor& t, const Tensor& bias) {
  const ChannelLayout l = channel_layout(t);
  Tensor out(t.shape(), t.dtype());
  auto src = t.data<T>();
  auto pb = bias.data<T>();
  auto dst = out.data<T>();
  for (std::size_t b = 0; b < l.pre; ++b) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const T bc = pb[c];
      const std::size_t base = (b * l.channels + c) * l.post;
      for (std::size_t s = 0; s < l.post; ++s) dst[base + s] = src[base + s] + bc;
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor, Tensor> batch_moments_impl(const Tensor& t) {
  const ChannelLayout l = channel_layout(t);
  Tensor mean({l.channels}, t.dtype());
  Tensor var({l.channels}, t.dtype());
  auto src = t.data<T>();
  auto pm = mean.data<T>();
  auto pv = var.data<T>();
  const T count = T(l.pre * l.post);
  for (std::size_t c = 0; c < l.channels; ++c) {
    T sum = 0;
    for (std::size_t b = 0; b < l.pre; ++b) {
      const std::size_t base = (b * l.channels + c) * l.post;
      for (std::size_t s = 0; s < l.post; ++s) sum += src[base + s];
    }
    const T mu = sum / count;
    T sq = 0;
    for (std::size_t b = 0; b < l.pre; ++b) {
      const std::size_t base = (b * l.channels + c) * l.post;
      for (std::size_t s = 0; s < l.post; ++s) {
        const T d = src[base + s] - mu;
        sq += d * d;
      }
    }
    pm[c] = mu;
    pv[c] = sq / count;
  }
  return {mean, var};
}

template <typename T>
Tensor softmax_impl(const Tensor& logits) {
  const std::size_t n = logits.extent(0), u = logits.extent(1);
  Tensor out(logits.shape(), logits.dtype());
  auto src = logits.data<T>();
  auto dst = out.data<T>();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = src.data() + i * u;
    T* orow = dst.data() + i * u;
    T mx = row[0];
    for (std::size_t j = 1; j < u; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (std::size_t j = 0; j < u; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < u; ++j) orow[j] /= denom;
  }
  return out;
}

}  // namespace

Tensor maxout(const Tensor& t, std::size_t pieces) {
  if (pieces == 0) throw ValueError("maxout: pieces must be positive");
  const ChannelLayout l = channel_layout(t);
  if (l.channels % pieces != 0) {
    throw ShapeError("maxout: " + std::to_string(l.channels) +
                     " channels not divisible by " + std::to_string(pieces));
  }
  return t.dtype() == Dtype::f32 ? maxout_impl<float>(t, pieces)
                                 : maxout_impl<double>(t, pieces);
}

Tensor add_bias(const Tensor& t, const Tensor& bias) {
  require_dtype_match(t, bias, "add_bias");
  const ChannelLayout l = channel_layout(t);
  if (bias.rank() != 1 || bias.extent(0) != l.channels) {
    throw ShapeError("add_bias: bias " + bias.shape_str() + " does not match " +
                     std::to_string(l.channels) + " channels");
  }
  return t.dtype() == Dtype::f32 ? add_bias_impl<float>(t, bias)
                                 : add_bias_impl<double>(t, bias);
}

namespace {
template <typename T, typename F>
Tensor zip_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape(), a.dtype());
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  auto dst = out.data<T>();
  for (std::size_t i = 0; i < pa.size(); ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}
}  // namespace

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
  require_dtype_match(a, b, "elementwise_add");
  require_same_shape(a, b, "elementwise_add");
  return a.dtype() == Dtype::f32
             ? zip_binary<float>(a, b, [](float x, float y) { return x + y; })
             : zip_binary<double>(a, b, [](double x, double y) { return x + y; });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  require_dtype_match(a, b, "elementwise_mul");
  require_same_shape(a, b, "elementwise_mul");
  return a.dtype() == Dtype::f32
             ? zip_binary<float>(a, b, [](float x, float y) { return x * y; })
             : zip_binary<double>(a, b, [](double x, double y) { return x * y; });
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax: expects [N,U] logits, got " + logits.shape_str());
  }
  return logits.dtype() == Dtype::f32 ? softmax_impl<float>(logits)
                                      : softmax_impl<double>(logits);
}

std::vector<int64_t> argmax_rows(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError("argmax_rows: expects rank-2 tensor, got " + t.shape_str());
  }
  const std::size_t n = t.extent(0), u = t.extent(1);
  std::vector<int64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double bv = t.get(i * u);
    for (std::size_t j = 1; j < u; ++j) {
      const double v = t.get(i * u + j);
      if (v > bv) {
        bv = v;
        best = j;
      }
    }
    out[i] = int64_t(best);
  }
  return out;
}

std::pair<Tensor, Tensor> batch_moments(const Tensor& t) {
  if (t.rank() < 2) {
    throw ShapeError("batch_moments: expects [N,C,...], got " + t.shape_str());
  }
  if (t.extent(0) < 2) {
    throw ValueError("batch_moments: batch size must be >= 2, got " +
                     std::to_string(t.extent(0)));
  }
  return t.dtype() == Dtype::f32 ? batch_moments_impl<float>(t)
                                 : batch_moments_impl<double>(t);
}

}  // namespace n2n
