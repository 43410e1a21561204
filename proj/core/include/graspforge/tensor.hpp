#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

// Dense row-major tensor. fp32 is the storage/training type; fp64 is used
// by the gradient-verification paths.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), T(0));
    return t;
  }
  static Tensor from(std::vector<int> s, std::vector<T> d) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    if (numel_of(t.shape) != static_cast<std::int64_t>(t.data.size()))
      throw std::invalid_argument("tensor data length does not match shape");
    return t;
  }
  static Tensor scalar(T v) { return from({1}, {v}); }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // 2-D helpers; a rank-1 tensor behaves as a single row.
  int rows() const { return rank() >= 2 ? shape[0] : 1; }
  int cols() const { return rank() >= 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  T at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> r;
  r.shape = t.shape;
  r.data.reserve(t.data.size());
  for (From v : t.data) r.data.push_back(static_cast<To>(v));
  return r;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace gf
