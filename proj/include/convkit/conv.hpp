#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

// Convolution hyperparameters. Padding is listed top/bottom/left/right;
// `groups` splits input channels and filters into independent blocks.
struct ConvGeom {
  int64_t stride_h = 1;
  int64_t stride_w = 1;
  int64_t pad_top = 0;
  int64_t pad_bottom = 0;
  int64_t pad_left = 0;
  int64_t pad_right = 0;
  int64_t groups = 1;
};

// Transposed-convolution hyperparameters: input upsampling factors and
// output crops (top/bottom/left/right).
struct ConvTransposeGeom {
  int64_t up_h = 1;
  int64_t up_w = 1;
  int64_t crop_top = 0;
  int64_t crop_bottom = 0;
  int64_t crop_left = 0;
  int64_t crop_right = 0;
};

// Output spatial size of a convolution along one axis (valid placements
// of the window over the padded signal).
int64_t conv_output_extent(int64_t extent, int64_t window, int64_t stride,
                           int64_t pad_lo, int64_t pad_hi);

// Output shape of conv_forward for input x and filter bank f; validates
// all shape/group constraints.
Shape conv_output_shape(const Shape& x, const Shape& f, const ConvGeom& g);

// Output shape of convt_forward.
Shape convt_output_shape(const Shape& x, const Shape& f,
                         const ConvTransposeGeom& g);

// Patch matrix of a single image (batch size 1): row p = i'' + outH*j''
// holds the window at output site (i'',j''), column q = i' + fh*(j' + fw*d)
// its sample at filter offset (i',j') in channel d. Out-of-range reads are
// zero. The result is an (outH*outW) x (fh*fw*D) matrix stored as a tensor
// with h = rows, w = cols (column-major).
template <class T>
Tensor<T> im2row(const Tensor<T>& image, int64_t filter_h, int64_t filter_w,
                 const ConvGeom& g);

// Adjoint of im2row: scatter-adds matrix entries back onto an image of
// shape `target` (batch size 1).
template <class T>
Tensor<T> row2im(const Tensor<T>& mat, const Shape& target, int64_t filter_h,
                 int64_t filter_w, const ConvGeom& g);

// y = conv(x, f) + bias. Filters f are fh x fw x (C/groups) x K; bias,
// when non-null, must have K elements.
template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& f,
                       const Tensor<T>* bias, const ConvGeom& g);

// Projected derivatives of conv_forward. Any of dx/df/db may be null to
// skip that output; db requires the forward to have used a bias.
template <class T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& f, const ConvGeom& g,
                   const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* df,
                   Tensor<T>* db);

// Transpose of the convolution that maps the output back onto x with
// stride = up and pad = crop. Filters are fh x fw x C x K where C matches
// x and K is the number of output channels.
template <class T>
Tensor<T> convt_forward(const Tensor<T>& x, const Tensor<T>& f,
                        const ConvTransposeGeom& g);

template <class T>
void convt_backward(const Tensor<T>& x, const Tensor<T>& f,
                    const ConvTransposeGeom& g, const Tensor<T>& dy,
                    Tensor<T>* dx, Tensor<T>* df);

}  // namespace convkit
