#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "polyseq/errors.hpp"
#include "polyseq/parallel.hpp"
#include "polyseq/rng.hpp"

namespace polyseq {

/// Dense row-major tensor. The scalar type is a template parameter: float is
/// the training precision, double is used by the gradient-check suites where
/// a sharp finite-difference comparison needs the extra headroom.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(compute_numel(shape_)), T(0));
  }

  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
  const T& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }

  T& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  const T& at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void fill_uniform(T lo, T hi, rng::SplitMix64& g) {
    for (auto& v : data_) v = static_cast<T>(g.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static std::int64_t compute_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) raise(Errc::kShapeMismatch, "non-positive tensor dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, std::initializer_list<int> shape, const char* what) {
  if (t.shape() != std::vector<int>(shape)) {
    raise(Errc::kShapeMismatch, std::string(what) + " has shape " + t.shape_str());
  }
}

namespace detail {

// Row-blocked GEMM kernel. For each output row the reduction over k runs in a
// fixed serial order, so a row's result is bitwise independent of how many
// other rows are computed alongside it and of the thread count. The reward
// estimator exploits this: a single-sequence replay reproduces the batched
// forward exactly.
template <typename T>
void gemm_rows(std::int64_t m0, std::int64_t m1, std::int64_t K, std::int64_t N, const T* a,
               std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
               bool accumulate) {
  constexpr std::int64_t MB = 8;
  for (std::int64_t mb = m0; mb < m1; mb += MB) {
    std::int64_t me = std::min(m1, mb + MB);
    if (!accumulate) {
      for (std::int64_t m = mb; m < me; ++m) {
        T* crow = c + m * ldc;
        for (std::int64_t n = 0; n < N; ++n) crow[n] = T(0);
      }
    }
    for (std::int64_t k = 0; k < K; ++k) {
      const T* brow = b + k * ldb;
      for (std::int64_t m = mb; m < me; ++m) {
        T av = a[m * lda + k];
        if (av == T(0)) continue;
        T* crow = c + m * ldc;
        for (std::int64_t n = 0; n < N; ++n) crow[n] += av * brow[n];
      }
    }
  }
}

}  // namespace detail

/// c[M,N] = a[M,K] * b[K,N], or += when accumulate is set.
template <typename T>
void matmul(std::int64_t M, std::int64_t K, std::int64_t N, const T* a, const T* b, T* c,
            bool accumulate = false) {
  const std::int64_t flops = M * K * N;
  const std::int64_t block = 64;
  if (flops < (1 << 20) || max_threads() <= 1) {
    detail::gemm_rows(std::int64_t(0), M, K, N, a, K, b, N, c, N, accumulate);
    return;
  }
  parallel_for_blocks(M, block, [&](std::int64_t lo, std::int64_t hi) {
    detail::gemm_rows(lo, hi, K, N, a, K, b, N, c, N, accumulate);
  });
}

/// c[M,N] = a[M,K] * b[N,K]^T (+)=. Inner loop is a plain dot product.
template <typename T>
void matmul_transB(std::int64_t M, std::int64_t K, std::int64_t N, const T* a, const T* b, T* c,
                   bool accumulate = false) {
  auto rows = [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t m = lo; m < hi; ++m) {
      const T* arow = a + m * K;
      T* crow = c + m * N;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* brow = b + n * K;
        T acc = accumulate ? crow[n] : T(0);
        for (std::int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
        crow[n] = acc;
      }
    }
  };
  if (M * K * N < (1 << 20) || max_threads() <= 1) {
    rows(0, M);
  } else {
    parallel_for_blocks(M, 64, rows);
  }
}

/// c[K,N] += a[M,K]^T * d[M,N]. Used for weight gradients; accumulation over
/// the batch dimension runs in fixed m order.
template <typename T>
void matmul_transA_accum(std::int64_t M, std::int64_t K, std::int64_t N, const T* a, const T* d,
                         T* c) {
  for (std::int64_t m = 0; m < M; ++m) {
    const T* arow = a + m * K;
    const T* drow = d + m * N;
    for (std::int64_t k = 0; k < K; ++k) {
      T av = arow[k];
      if (av == T(0)) continue;
      T* crow = c + k * N;
      for (std::int64_t n = 0; n < N; ++n) crow[n] += av * drow[n];
    }
  }
}

template <typename T>
bool all_finite(std::span<const T> xs) {
  for (T x : xs) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace polyseq
