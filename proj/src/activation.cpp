#include "convkit/activation.hpp"

#include <cmath>

namespace convkit {

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t k = 0; k < x.size(); ++k) y[k] = x[k] > T(0) ? x[k] : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (dy.shape() != x.shape()) {
    throw ShapeError("relu backward: projection shape mismatch");
  }
  Tensor<T> dx(x.shape());
  for (int64_t k = 0; k < x.size(); ++k) dx[k] = x[k] > T(0) ? dy[k] : T(0);
  return dx;
}

template <class T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t k = 0; k < x.size(); ++k) {
    T v = x[k];
    // Split on the sign so the exponential never overflows.
    if (v >= T(0)) {
      y[k] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      y[k] = e / (T(1) + e);
    }
  }
  return y;
}

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (dy.shape() != y.shape()) {
    throw ShapeError("sigmoid backward: projection shape mismatch");
  }
  Tensor<T> dx(y.shape());
  for (int64_t k = 0; k < y.size(); ++k) dx[k] = dy[k] * y[k] * (T(1) - y[k]);
  return dx;
}

#define CONVKIT_INSTANTIATE(T)                                      \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);             \
  template Tensor<T> relu_backward<T>(const Tensor<T>&,             \
                                      const Tensor<T>&);            \
  template Tensor<T> sigmoid_forward<T>(const Tensor<T>&);          \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&,          \
                                         const Tensor<T>&);

CONVKIT_INSTANTIATE(float)
CONVKIT_INSTANTIATE(double)
#undef CONVKIT_INSTANTIATE

}  // namespace convkit
