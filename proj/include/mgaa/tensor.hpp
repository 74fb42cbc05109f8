#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

// Dense 4-D tensor in (batch, channel, freq, time) order, row-major with the
// time axis contiguous.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int b, int c, int f, int t)
      : d_{b, c, f, t}, v_(size_t(b) * size_t(c) * size_t(f) * size_t(t), T(0)) {
    require(b > 0 && c > 0 && f > 0 && t > 0, "tensor dims must be positive, got (",
            b, ",", c, ",", f, ",", t, ")");
  }

  static Tensor scalar(T x) {
    Tensor s(1, 1, 1, 1);
    s.v_[0] = x;
    return s;
  }

  int b() const { return d_[0]; }
  int c() const { return d_[1]; }
  int f() const { return d_[2]; }
  int t() const { return d_[3]; }
  const std::array<int, 4>& dims() const { return d_; }

  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  T& operator[](size_t i) { return v_[i]; }
  const T& operator[](size_t i) const { return v_[i]; }

  T& operator()(int b, int c, int f, int t) { return v_[index(b, c, f, t)]; }
  const T& operator()(int b, int c, int f, int t) const { return v_[index(b, c, f, t)]; }

  size_t index(int b, int c, int f, int t) const {
    return ((size_t(b) * d_[1] + c) * d_[2] + f) * d_[3] + t;
  }

  void fill(T x) { std::fill(v_.begin(), v_.end(), x); }

  bool same_shape(const Tensor& o) const { return d_ == o.d_; }

  bool all_finite() const {
    for (const T& x : v_)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  void release() {
    v_.clear();
    v_.shrink_to_fit();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(d_[0], d_[1], d_[2], d_[3]);
    for (size_t i = 0; i < v_.size(); ++i) out[i] = U(v_[i]);
    return out;
  }

 private:
  std::array<int, 4> d_{0, 0, 0, 0};
  std::vector<T> v_;
};

// Plain row-major double matrix for the DSP front end.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return a[size_t(r) * cols + c]; }
};

}  // namespace mgaa
