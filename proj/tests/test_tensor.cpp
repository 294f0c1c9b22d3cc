// Unit tests for the tensor kernels. Reference implementations here are
// deliberately independent of the production code paths.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "n2n/rng.hpp"
#include "n2n/tensor.hpp"

using namespace n2n;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Dtype dtype, uint64_t seed) {
  Tensor t(std::move(shape), dtype);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal());
  return t;
}

// Plain triple-loop matrix product.
template <typename T>
std::vector<T> matmul_ref(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.extent(0), n = a.extent(1), p = b.extent(1);
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  std::vector<T> c(m * p, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        c[i * p + j] += pa[i * n + k] * pb[k * p + j];
      }
    }
  }
  return c;
}

// The naive six-loop cross-correlation: n, k, oh, ow outer, then (c, r, s)
// accumulation -- the reference order the production kernel must match.
template <typename T>
std::vector<T> conv2d_ref(const Tensor& x, const Tensor& w,
                          const ConvGeometry& g) {
  const std::size_t N = x.extent(0), C = x.extent(1), H = x.extent(2),
                    W = x.extent(3);
  const std::size_t K = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  const std::size_t OH = g.out_h(H), OW = g.out_w(W);
  auto px = x.data<T>();
  auto pw = w.data<T>();
  std::vector<T> y(N * K * OH * OW, T(0));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          T acc = 0;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t r = 0; r < kh; ++r) {
              for (std::size_t s = 0; s < kw; ++s) {
                const std::ptrdiff_t ih =
                    std::ptrdiff_t(oh * g.stride_h + r) - std::ptrdiff_t(g.pad_h);
                const std::ptrdiff_t iw =
                    std::ptrdiff_t(ow * g.stride_w + s) - std::ptrdiff_t(g.pad_w);
                if (ih < 0 || ih >= std::ptrdiff_t(H) || iw < 0 ||
                    iw >= std::ptrdiff_t(W)) {
                  continue;
                }
                acc += px[((n * C + c) * H + std::size_t(ih)) * W + std::size_t(iw)] *
                       pw[((k * C + c) * kh + r) * kw + s];
              }
            }
          }
          y[((n * K + k) * OH + oh) * OW + ow] = acc;
        }
      }
    }
  }
  return y;
}

}  // namespace

TEST_CASE("matmul identity cases") {
  const Tensor a = Tensor::from_data<float>({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from_data<float>({2, 2}, {1, 0, 0, 1});
  const Tensor prod = matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod.get(i) == a.get(i));

  const Tensor col = Tensor::from_data<float>({2, 1}, {5, 7});
  const Tensor prod2 = matmul(eye, col);
  CHECK(prod2.get(0) == 5.0f);
  CHECK(prod2.get(1) == 7.0f);
}

TEST_CASE("matmul equals the triple-loop reference bit-exactly") {
  for (uint64_t seed : {1, 2, 3}) {
    const Tensor a = random_tensor({4, 3}, Dtype::f32, seed);
    const Tensor b = random_tensor({3, 2}, Dtype::f32, seed + 100);
    const Tensor c = matmul(a, b);
    const auto ref = matmul_ref<float>(a, b);
    auto pc = c.data<float>();
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(pc[i] == ref[i]);
  }
  const Tensor a = random_tensor({5, 7}, Dtype::f64, 9);
  const Tensor b = random_tensor({7, 4}, Dtype::f64, 10);
  const auto ref = matmul_ref<double>(a, b);
  const Tensor c = matmul(a, b);
  auto pc = c.data<double>();
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(pc[i] == ref[i]);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  const Tensor a = random_tensor({2, 3}, Dtype::f32, 1);
  const Tensor b = random_tensor({4, 2}, Dtype::f32, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
  const Tensor d = random_tensor({3, 2}, Dtype::f64, 3);
  CHECK_THROWS_AS(matmul(a, d.astype(Dtype::f64)), ShapeError);
}

TEST_CASE("matmul_tn and matmul_nt agree with explicit transposes") {
  const Tensor a = random_tensor({6, 4}, Dtype::f64, 5);
  const Tensor b = random_tensor({6, 3}, Dtype::f64, 6);
  const Tensor tn = matmul_tn(a, b);  // a^T b -> [4x3]
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 6; ++k) acc += a.get(k * 4 + i) * b.get(k * 3 + j);
      CHECK(tn.get(i * 3 + j) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
  const Tensor c = random_tensor({5, 4}, Dtype::f64, 7);
  const Tensor d = random_tensor({3, 4}, Dtype::f64, 8);
  const Tensor nt = matmul_nt(c, d);  // c d^T -> [5x3]
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += c.get(i * 4 + k) * d.get(j * 4 + k);
      CHECK(nt.get(i * 3 + j) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("conv2d identity cases") {
  // 1x1 kernel of value 1 reproduces the input.
  const Tensor x = random_tensor({1, 1, 3, 3}, Dtype::f32, 11);
  ConvGeometry g1;
  g1.in_channels = g1.out_channels = 1;
  const Tensor k1 = Tensor::from_data<float>({1, 1, 1, 1}, {1.0f});
  const Tensor y1 = conv2d(x, k1, g1);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y1.get(i) == x.get(i));

  // Centered identity filter with same-padding reproduces the input.
  const Tensor x2 = random_tensor({2, 3, 5, 5}, Dtype::f32, 12);
  ConvGeometry g2;
  g2.kernel_h = g2.kernel_w = 3;
  g2.pad_h = g2.pad_w = 1;
  g2.in_channels = g2.out_channels = 3;
  Tensor k2({3, 3, 3, 3}, Dtype::f32);
  for (std::size_t c = 0; c < 3; ++c) k2.set((c * 3 + c) * 9 + 4, 1.0);
  const Tensor y2 = conv2d(x2, k2, g2);
  for (std::size_t i = 0; i < x2.numel(); ++i) CHECK(y2.get(i) == x2.get(i));
}

TEST_CASE("conv2d equals the naive six-loop reference bit-exactly") {
  const Tensor x = random_tensor({2, 3, 5, 5}, Dtype::f32, 21);
  ConvGeometry g;
  g.kernel_h = g.kernel_w = 3;
  g.pad_h = g.pad_w = 1;
  g.in_channels = 3;
  g.out_channels = 4;
  const Tensor k = random_tensor({4, 3, 3, 3}, Dtype::f32, 22);
  const Tensor y = conv2d(x, k, g);
  const auto ref = conv2d_ref<float>(x, k, g);
  auto py = y.data<float>();
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(py[i] == ref[i]);
}

TEST_CASE("conv2d matches the reference over 100 random geometries") {
  Rng rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + rng.uniform_u32(3);
    const std::size_t K = 1 + rng.uniform_u32(3);
    const std::size_t kh = 1 + rng.uniform_u32(3);
    const std::size_t kw = 1 + rng.uniform_u32(3);
    const std::size_t H = kh + rng.uniform_u32(5);
    const std::size_t W = kw + rng.uniform_u32(5);
    ConvGeometry g;
    g.kernel_h = kh;
    g.kernel_w = kw;
    g.stride_h = 1 + rng.uniform_u32(2);
    g.stride_w = 1 + rng.uniform_u32(2);
    g.pad_h = rng.uniform_u32(2);
    g.pad_w = rng.uniform_u32(2);
    g.in_channels = C;
    g.out_channels = K;
    const Dtype dtype = trial % 2 == 0 ? Dtype::f32 : Dtype::f64;
    const Tensor x = random_tensor({2, C, H, W}, dtype, 1000 + uint64_t(trial));
    const Tensor k = random_tensor({K, C, kh, kw}, dtype, 2000 + uint64_t(trial));
    const Tensor y = conv2d(x, k, g);
    if (dtype == Dtype::f32) {
      const auto ref = conv2d_ref<float>(x, k, g);
      auto py = y.data<float>();
      for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(py[i] == ref[i]);
    } else {
      const auto ref = conv2d_ref<double>(x, k, g);
      auto py = y.data<double>();
      for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(py[i] == ref[i]);
    }
  }
}

TEST_CASE("conv2d error cases") {
  const Tensor x = random_tensor({1, 2, 4, 4}, Dtype::f32, 31);
  ConvGeometry g;
  g.in_channels = 3;  // input has 2
  g.out_channels = 1;
  const Tensor k = random_tensor({1, 3, 1, 1}, Dtype::f32, 32);
  CHECK_THROWS_AS(conv2d(x, k, g), ShapeError);

  ConvGeometry g2;
  g2.kernel_h = 7;  // larger than padded input
  g2.kernel_w = 1;
  g2.in_channels = 2;
  g2.out_channels = 1;
  const Tensor k2 = random_tensor({1, 2, 7, 1}, Dtype::f32, 33);
  CHECK_THROWS_AS(conv2d(x, k2, g2), ShapeError);
}

TEST_CASE("relu, maxout, softmax basics") {
  const Tensor x = Tensor::from_data<float>({3}, {-1, 0, 2});
  const Tensor r = relu(x);
  CHECK(r.get(0) == 0.0);
  CHECK(r.get(1) == 0.0);
  CHECK(r.get(2) == 2.0);

  const Tensor m = maxout(Tensor::from_data<float>({4}, {1, 5, 3, 2}), 2);
  CHECK(m.extent(0) == 2);
  CHECK(m.get(0) == 5.0);
  CHECK(m.get(1) == 3.0);
  CHECK_THROWS_AS(maxout(Tensor::from_data<float>({3}, {1, 2, 3}), 2), ShapeError);

  const Tensor s = softmax(Tensor::from_data<float>({1, 2}, {0, 0}));
  CHECK(s.get(0) == doctest::Approx(0.5));
  CHECK(s.get(1) == doctest::Approx(0.5));
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  const Tensor logits = random_tensor({64, 9}, Dtype::f32, 77);
  const Tensor p = softmax(logits);
  for (std::size_t i = 0; i < 64; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(p.get(i * 9 + j) >= 0.0);
      sum += p.get(i * 9 + j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("maxout over channel maps takes groups of consecutive channels") {
  // [1,4,1,2] -> pieces 2 -> [1,2,1,2]
  const Tensor x =
      Tensor::from_data<float>({1, 4, 1, 2}, {1, 8, 2, 7, 3, 6, 4, 5});
  const Tensor y = maxout(x, 2);
  CHECK(y.shape() == std::vector<std::size_t>{1, 2, 1, 2});
  CHECK(y.get(0) == 2.0);  // max(1,2)
  CHECK(y.get(1) == 8.0);  // max(8,7)
  CHECK(y.get(2) == 4.0);  // max(3,4)
  CHECK(y.get(3) == 6.0);  // max(6,5)
}

TEST_CASE("add_bias and elementwise ops") {
  const Tensor x = Tensor::from_data<float>({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from_data<float>({2}, {10, 20});
  const Tensor y = add_bias(x, b);
  CHECK(y.get(0) == 11.0);
  CHECK(y.get(1) == 22.0);
  CHECK(y.get(2) == 13.0);
  CHECK(y.get(3) == 24.0);

  const Tensor prod = elementwise_mul(x, x);
  CHECK(prod.get(3) == 16.0);
  const Tensor sum = elementwise_add(x, x);
  CHECK(sum.get(2) == 6.0);
  CHECK_THROWS_AS(elementwise_add(x, b), ShapeError);
}

TEST_CASE("batch_moments basics") {
  const Tensor c3 = Tensor::full({4, 2}, Dtype::f32, 3.0);
  auto [m, v] = batch_moments(c3);
  CHECK(m.get(0) == 3.0);
  CHECK(m.get(1) == 3.0);
  CHECK(v.get(0) == 0.0);

  const Tensor two = Tensor::from_data<float>({2, 1}, {1, 3});
  auto [m2, v2] = batch_moments(two);
  CHECK(m2.get(0) == 2.0);
  CHECK(v2.get(0) == 1.0);

  CHECK_THROWS_AS(batch_moments(Tensor::from_data<float>({1, 2}, {1, 2})),
                  ValueError);
}

TEST_CASE("batch_moments matches a two-pass reference in f64") {
  const Tensor x = random_tensor({6, 3, 4, 4}, Dtype::f64, 55);
  auto [mean, var] = batch_moments(x);
  auto px = x.data<double>();
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t s = 0; s < 16; ++s) {
        sum += px[(n * 3 + c) * 16 + s];
        ++count;
      }
    }
    const double mu = sum / double(count);
    double sq = 0;
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t s = 0; s < 16; ++s) {
        const double d = px[(n * 3 + c) * 16 + s] - mu;
        sq += d * d;
      }
    }
    CHECK(std::abs(mean.get(c) - mu) <= 1e-12);
    CHECK(std::abs(var.get(c) - sq / double(count)) <= 1e-12);
  }
}

TEST_CASE("tensor constructor rejects invalid shapes") {
  CHECK_THROWS_AS(Tensor({}, Dtype::f32), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0, 3}, Dtype::f32), ShapeError);
}

TEST_CASE("argmax_rows picks the first maximum") {
  const Tensor t = Tensor::from_data<float>({2, 3}, {1, 3, 3, 0, -1, -2});
  const auto idx = argmax_rows(t);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 0);
}
