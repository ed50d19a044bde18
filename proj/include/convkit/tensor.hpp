#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convkit/error.hpp"

namespace convkit {

// Logical dimensions of a dense 4D array: height, width, channels, batch.
// Trailing dimensions default to 1, so an HxWxC map is an HxWxCx1 tensor.
struct Shape {
  int64_t h = 1;
  int64_t w = 1;
  int64_t c = 1;
  int64_t n = 1;

  Shape() = default;
  Shape(int64_t h_, int64_t w_ = 1, int64_t c_ = 1, int64_t n_ = 1)
      : h(h_), w(w_), c(c_), n(n_) {}

  int64_t elems() const { return h * w * c * n; }
  bool valid() const { return h >= 1 && w >= 1 && c >= 1 && n >= 1; }

  bool operator==(const Shape& o) const {
    return h == o.h && w == o.w && c == o.c && n == o.n;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const;
};

// Dense 4D tensor. The flat storage visits height fastest, then width,
// then channels, then batch; flattening in that order is what every
// matrix identity in this library assumes.
template <class T>
class Tensor {
 public:
  Tensor() : shape_(1, 1, 1, 1), data_(1, T(0)) {}

  explicit Tensor(Shape s) : shape_(s) {
    check_shape(s);
    data_.assign(static_cast<size_t>(s.elems()), T(0));
  }

  Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    check_shape(s);
    if (static_cast<int64_t>(data_.size()) != s.elems()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + s.str());
    }
  }

  static Tensor filled(Shape s, T value) {
    Tensor t(s);
    for (auto& v : t.data_) v = value;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  int64_t index(int64_t i, int64_t j, int64_t c, int64_t n) const {
    return i + shape_.h * (j + shape_.w * (c + shape_.c * n));
  }

  T& at(int64_t i, int64_t j, int64_t c = 0, int64_t n = 0) {
    return data_[static_cast<size_t>(index(i, j, c, n))];
  }
  const T& at(int64_t i, int64_t j, int64_t c = 0, int64_t n = 0) const {
    return data_[static_cast<size_t>(index(i, j, c, n))];
  }

  T& operator[](int64_t k) { return data_[static_cast<size_t>(k)]; }
  const T& operator[](int64_t k) const { return data_[static_cast<size_t>(k)]; }

  bool in_bounds(int64_t i, int64_t j) const {
    return i >= 0 && i < shape_.h && j >= 0 && j < shape_.w;
  }

 private:
  static void check_shape(const Shape& s) {
    if (!s.valid()) throw ShapeError("invalid tensor shape " + s.str());
  }

  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Sum of the elementwise product; shapes must agree exactly.
template <class T>
T inner(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("inner: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  T acc = T(0);
  const T* pa = a.data();
  const T* pb = b.data();
  for (int64_t k = 0; k < a.size(); ++k) acc += pa[k] * pb[k];
  return acc;
}

// Same flat data under a new shape with equal element count.
template <class T>
Tensor<T> reshaped(const Tensor<T>& x, Shape s) {
  if (s.elems() != x.shape().elems()) {
    throw ShapeError("reshape: element count mismatch " + x.shape().str() +
                     " vs " + s.str());
  }
  return Tensor<T>(s, x.vec());
}

template <class U, class T>
Tensor<U> cast(const Tensor<T>& x) {
  std::vector<U> out(x.vec().size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = static_cast<U>(x.vec()[k]);
  return Tensor<U>(x.shape(), std::move(out));
}

}  // namespace convkit
