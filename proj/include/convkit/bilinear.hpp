#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

// Bilinear grid resampler. The grid is a 2 x outH x outW x N tensor of
// coordinates in [-1,1]: channel-0 rows hold the vertical coordinate,
// channel-1 rows the horizontal one (grid.at(0, i, j, n) = vertical,
// grid.at(1, i, j, n) = horizontal). -1 maps to the first input sample
// and +1 to the last; samples outside [-1,1] fade to zero through the
// tent weights.
Shape bilinear_output_shape(const Shape& x, const Shape& grid);

template <class T>
Tensor<T> bilinear_forward(const Tensor<T>& x, const Tensor<T>& grid);

template <class T>
void bilinear_backward(const Tensor<T>& x, const Tensor<T>& grid,
                       const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgrid);

// Grid that reproduces the input when the output size matches it.
template <class T>
Tensor<T> identity_grid(int64_t out_h, int64_t out_w, int64_t batch);

}  // namespace convkit
