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

#ifndef N2N_TENSOR_HPP_
#define N2N_TENSOR_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "n2n/errors.hpp"

namespace n2n {

enum class Dtype { f32, f64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }
inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

// Dense n-dimensional array, row-major, NCHW layout for image data.
// Rank >= 1, no zero extents. A default-constructed Tensor is a null
// placeholder for containers and must be assigned before use.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, Dtype dtype)
      : shape_(std::move(shape)), dtype_(dtype) {
    const std::size_t n = checked_numel(shape_);
    if (dtype_ == Dtype::f32) {
      f32_.assign(n, 0.0f);
    } else {
      f64_.assign(n, 0.0);
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape, Dtype dtype) {
    return Tensor(std::move(shape), dtype);
  }

  static Tensor full(std::vector<std::size_t> shape, Dtype dtype, double value);

  template <typename T>
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<T> values);

  bool is_null() const { return shape_.empty(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  Dtype dtype() const { return dtype_; }

  std::size_t numel() const {
    std::size_t n = shape_.empty() ? 0 : 1;
    for (std::size_t e : shape_) n *= e;
    return n;
  }

  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  // Scalar accessor used by tests and small remap loops; not a hot path.
  double get(std::size_t flat_index) const;
  void set(std::size_t flat_index, double value);

  Tensor astype(Dtype target) const;

  std::string shape_str() const;

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape);

  std::vector<std::size_t> shape_;
  Dtype dtype_ = Dtype::f32;
  std::vector<float> f32_;
  std::vector<double> f64_;
};

template <>
inline std::span<float> Tensor::data<float>() {
  if (dtype_ != Dtype::f32) throw ShapeError("tensor is not f32");
  return std::span<float>(f32_);
}
template <>
inline std::span<double> Tensor::data<double>() {
  if (dtype_ != Dtype::f64) throw ShapeError("tensor is not f64");
  return std::span<double>(f64_);
}
template <>
inline std::span<const float> Tensor::data<float>() const {
  if (dtype_ != Dtype::f32) throw ShapeError("tensor is not f32");
  return std::span<const float>(f32_);
}
template <>
inline std::span<const double> Tensor::data<double>() const {
  if (dtype_ != Dtype::f64) throw ShapeError("tensor is not f64");
  return std::span<const double>(f64_);
}

template <typename T>
Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<T> values) {
  Tensor t(std::move(shape), std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64);
  if (values.size() != t.numel()) {
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values for shape " + t.shape_str());
  }
  auto dst = t.data<T>();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = values[i];
  return t;
}

// 2-D convolution geometry. Output extents must stay positive.
struct ConvGeometry {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t in_channels = 1, out_channels = 1;

  std::size_t out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t pad) const {
    const std::size_t padded = in + 2 * pad;
    if (padded < kernel) {
      throw ShapeError("conv geometry: kernel " + std::to_string(kernel) +
                       " exceeds padded extent " + std::to_string(padded));
    }
    return (padded - kernel) / stride + 1;
  }
  std::size_t out_h(std::size_t in_h) const {
    return out_extent(in_h, kernel_h, stride_h, pad_h);
  }
  std::size_t out_w(std::size_t in_w) const {
    return out_extent(in_w, kernel_w, stride_w, pad_w);
  }
  void validate() const;
};

// ---- Kernels. All pure; all deterministic (fixed reduction orders). ----

// [m x n] * [n x p] -> [m x p], accumulated in the tensor dtype.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T b: [n x m]^T * [n x p] -> [m x p].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a b^T: [m x n] * [p x n]^T -> [m x p].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Cross-correlation with zero padding. input [N,C,H,W], kernel [K,C,kh,kw].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvGeometry& geom);

Tensor relu(const Tensor& t);
// Max over groups of `pieces` consecutive units along the channel axis
// (axis 0 for rank-1 tensors, axis 1 otherwise).
Tensor maxout(const Tensor& t, std::size_t pieces);
// Adds bias [C] over axis 1 of t [N,C,...] (axis 0 for rank-1).
Tensor add_bias(const Tensor& t, const Tensor& bias);
Tensor elementwise_add(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
// Row-wise softmax of logits [N,U], numerically stabilized.
Tensor softmax(const Tensor& logits);
std::vector<int64_t> argmax_rows(const Tensor& t);

// Per-channel mean and population variance of t [N,C,...] over all
// non-channel axes. Requires N >= 2.
std::pair<Tensor, Tensor> batch_moments(const Tensor& t);

}  // namespace n2n

#endif  // N2N_TENSOR_HPP_
