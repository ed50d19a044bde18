#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

enum class PoolMode { max, avg };

// Spatial pooling hyperparameters. Windows straddling the boundary are
// cropped to the real signal: max pooling ignores padded samples and
// average pooling divides by the cropped area, so padding contributes
// neither value nor area. Pads must stay below the window size.
struct PoolGeom {
  int64_t window_h = 1;
  int64_t window_w = 1;
  int64_t stride_h = 1;
  int64_t stride_w = 1;
  int64_t pad_top = 0;
  int64_t pad_bottom = 0;
  int64_t pad_left = 0;
  int64_t pad_right = 0;
  PoolMode mode = PoolMode::max;
};

Shape pool_output_shape(const Shape& x, const PoolGeom& g);

template <class T>
Tensor<T> pool_forward(const Tensor<T>& x, const PoolGeom& g);

// Max mode routes each projection entry to the first-in-scan-order argmax
// of its window; avg mode spreads it uniformly over the cropped window.
template <class T>
Tensor<T> pool_backward(const Tensor<T>& x, const PoolGeom& g,
                        const Tensor<T>& dy);

}  // namespace convkit
