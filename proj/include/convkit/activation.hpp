#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);

// Passes the projection through where x > 0; the kink at zero routes to 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <class T>
Tensor<T> sigmoid_forward(const Tensor<T>& x);

// Consumes the forward output y rather than x.
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);

}  // namespace convkit
