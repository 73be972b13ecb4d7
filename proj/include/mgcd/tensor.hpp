#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mgcd/errors.hpp"

namespace mgcd {

// Dense rank-4 array (batch, channel, height, width), row-major with W fastest.
template <typename T>
struct TensorT {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  TensorT() = default;
  TensorT(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw ShapeError("negative tensor dimension");
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  size_t idx(int i, int j, int y, int x) const {
    return ((static_cast<size_t>(i) * c + j) * h + y) * w + x;
  }
  T& at(int i, int j, int y, int x) { return data[idx(i, j, y, x)]; }
  T at(int i, int j, int y, int x) const { return data[idx(i, j, y, x)]; }

  bool same_shape(const TensorT& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T max_abs() const {
    T m = 0;
    for (const T& v : data) m = std::max(m, static_cast<T>(std::abs(static_cast<double>(v))));
    return m;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(n, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

// y += a * x
template <typename T>
void axpy(T a, const TensorT<T>& x, TensorT<T>& y) {
  check_same_shape(x, y, "axpy");
  for (size_t i = 0; i < x.size(); ++i) y.data[i] += a * x.data[i];
}

template <typename T>
T l1_norm(const TensorT<T>& x) {
  T s = 0;
  for (const T& v : x.data) s += static_cast<T>(std::abs(static_cast<double>(v)));
  return s;
}

template <typename T>
T sum_squares(const TensorT<T>& x) {
  T s = 0;
  for (const T& v : x.data) s += v * v;
  return s;
}

// Collects rows `indices` of a (N,C,H,W) tensor into a new batch.
template <typename T>
TensorT<T> gather_batch(const TensorT<T>& set, const std::vector<int>& indices) {
  TensorT<T> out(static_cast<int>(indices.size()), set.c, set.h, set.w);
  const size_t stride = static_cast<size_t>(set.c) * set.h * set.w;
  for (size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    if (src < 0 || src >= set.n) throw ShapeError("gather_batch: index out of range");
    std::copy(set.data.begin() + src * stride, set.data.begin() + (src + 1) * stride,
              out.data.begin() + i * stride);
  }
  return out;
}

// Extracts example i as a 1xCxHxW tensor.
template <typename T>
TensorT<T> slice_one(const TensorT<T>& set, int i) {
  return gather_batch(set, std::vector<int>{i});
}

}  // namespace mgcd
