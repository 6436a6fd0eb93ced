// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tore/errors.hpp"

namespace tore {

/// Dense row-major array. The last dimension is the "column" axis for every
/// row-wise kernel; all leading dimensions are flattened into rows.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), T(0));
  }

  BasicTensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor: shape " + shape_string(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static BasicTensor filled(std::vector<int> shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static BasicTensor vector(std::vector<T> values) {
    const int n = static_cast<int>(values.size());
    return BasicTensor({n}, std::move(values));
  }

  static BasicTensor matrix(int rows, int cols, std::vector<T> values) {
    return BasicTensor({rows, cols}, std::move(values));
  }

  static BasicTensor identity(int n) {
    BasicTensor t({n, n});
    for (int i = 0; i < n; ++i) t.data_[static_cast<std::size_t>(i) * n + i] = T(1);
    return t;
  }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Number of rows when viewed as a matrix over the last dimension.
  int rows() const noexcept {
    if (shape_.empty()) return 1;
    return static_cast<int>(data_.size() / static_cast<std::size_t>(shape_.back()));
  }
  int cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

  std::span<T> row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }
  std::span<const T> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }

  BasicTensor reshaped(std::vector<int> shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const BasicTensor& o) const = default;

  static std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw DimensionError("tensor: non-positive dimension in " + shape_string(shape));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Scalar multiplies performed by the kernels on this thread. Used by the
/// FLOP auditor to compare its analytical model against real execution.
inline std::uint64_t& multiply_counter() noexcept {
  thread_local std::uint64_t count = 0;
  return count;
}

/// Reports the multiplies issued by kernels between construction and `count()`.
class MultiplyCounter {
 public:
  MultiplyCounter() noexcept : start_(multiply_counter()) {}
  std::uint64_t count() const noexcept { return multiply_counter() - start_; }

 private:
  std::uint64_t start_;
};

namespace kernels {

inline constexpr double kGeluCoeff = 0.044715;
inline constexpr double kSqrt2OverPi = 0.7978845608028654;

template <typename T>
void require_matrix(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         BasicTensor<T>::shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + BasicTensor<T>::shape_string(a.shape()) +
                         " vs " + BasicTensor<T>::shape_string(b.shape()));
  }
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

/// c = a·b. Each output element accumulates over k in increasing order,
/// starting from zero, so results do not depend on loop blocking.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions " + BasicTensor<T>::shape_string(a.shape()) +
                         " x " + BasicTensor<T>::shape_string(b.shape()));
  }
  BasicTensor<T> c({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
  for (int i = 0; i < m; ++i) {
    T* ci = pc + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = pa[static_cast<std::size_t>(i) * k + p];
      const T* bp = pb + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  multiply_counter() += static_cast<std::uint64_t>(m) * k * n;
  return c;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_matrix(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  BasicTensor<T> t({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

/// a·bᵀ for a [m×k], b [n×k].
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return matmul(a, transpose(b));
}

/// aᵀ·b for a [r×m], b [r×n]; accumulation over r in increasing order.
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const int r = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != r) throw DimensionError("matmul_tn: row counts differ");
  BasicTensor<T> c({m, n});
  T* pc = c.data().data();
  for (int p = 0; p < r; ++p) {
    const auto arow = a.row(p);
    const T* brow = b.row(p).data();
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      T* ci = pc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * brow[j];
    }
  }
  multiply_counter() += static_cast<std::uint64_t>(r) * m * n;
  return c;
}

template <typename T, typename F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what, F f) {
  require_same_shape(a, b, what);
  BasicTensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = f(a[i], b[i]);
  return c;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  multiply_counter() += a.size();
  return zip(a, b, "mul", [](T x, T y) { return x * y; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  BasicTensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
  multiply_counter() += a.size();
  return c;
}

/// Adds `bias` (length = cols) to every row.
template <typename T>
BasicTensor<T> add_row(const BasicTensor<T>& a, const BasicTensor<T>& bias) {
  if (static_cast<int>(bias.size()) != a.cols()) throw DimensionError("add_row: bias length mismatch");
  BasicTensor<T> c = a;
  const int n = a.cols();
  for (int r = 0; r < a.rows(); ++r) {
    auto row = c.row(r);
    for (int j = 0; j < n; ++j) row[j] += bias[static_cast<std::size_t>(j)];
  }
  return c;
}

/// Column sums, i.e. the gradient of a row-broadcast bias.
template <typename T>
BasicTensor<T> sum_rows(const BasicTensor<T>& a) {
  BasicTensor<T> s({a.cols()});
  for (int r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (int j = 0; j < a.cols(); ++j) s[static_cast<std::size_t>(j)] += row[j];
  }
  return s;
}

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& g) {
  require_same_shape(into, g, "accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

/// Row-wise softmax with per-row max subtraction.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& a) {
  require_finite(a, "softmax_rows");
  BasicTensor<T> out(a.shape());
  const int n = a.cols();
  for (int r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    auto o = out.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T sum = 0;
    for (int j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < n; ++j) o[j] *= inv;
  }
  multiply_counter() += a.size();
  return out;
}

/// dL/dlogits from dL/dprobs for a row-wise softmax with output `y`.
template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& gy) {
  BasicTensor<T> gx(y.shape());
  const int n = y.cols();
  for (int r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = gy.row(r);
    auto out = gx.row(r);
    T dot = 0;
    for (int j = 0; j < n; ++j) dot += yr[j] * gr[j];
    for (int j = 0; j < n; ++j) out[j] = yr[j] * (gr[j] - dot);
  }
  return gx;
}

/// Per-row statistics kept by `layer_norm` for its backward pass.
template <typename T>
struct NormStats {
  std::vector<T> mean;
  std::vector<T> rstd;
};

/// y = (x - mean) / sqrt(var + eps) * gain + bias, with population variance.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                          T eps, NormStats<T>* stats = nullptr) {
  const int d = x.cols();
  if (static_cast<int>(gain.size()) != d || static_cast<int>(bias.size()) != d) {
    throw DimensionError("layer_norm: gain/bias length must equal the last dimension");
  }
  BasicTensor<T> y(x.shape());
  if (stats) {
    stats->mean.resize(static_cast<std::size_t>(x.rows()));
    stats->rstd.resize(static_cast<std::size_t>(x.rows()));
  }
  for (int r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      yr[j] = (xr[j] - mean) * rstd * gain[static_cast<std::size_t>(j)] + bias[static_cast<std::size_t>(j)];
    }
    if (stats) {
      stats->mean[static_cast<std::size_t>(r)] = mean;
      stats->rstd[static_cast<std::size_t>(r)] = rstd;
    }
  }
  multiply_counter() += 3 * x.size();
  return y;
}

template <typename T>
T gelu_scalar(T x) {
  const T inner = static_cast<T>(kSqrt2OverPi) * (x + static_cast<T>(kGeluCoeff) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_derivative(T x) {
  const T c = static_cast<T>(kSqrt2OverPi);
  const T a = static_cast<T>(kGeluCoeff);
  const T inner = c * (x + a * x * x * x);
  const T th = std::tanh(inner);
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * a * x * x);
}

/// GELU, tanh approximation.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
  multiply_counter() += 6 * x.size();
  return y;
}

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

template <typename T>
int argmax(std::span<const T> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename T>
int argmax(const BasicTensor<T>& t) {
  return argmax(t.data());
}

}  // namespace kernels
}  // namespace tore
