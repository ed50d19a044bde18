#pragma once

#include "convkit/rational.hpp"

namespace convkit {

// One spatial axis of a filter-like block: window size, stride, and the
// padding applied before/after the signal.
struct FilterSpec {
  int64_t size = 1;
  int64_t stride = 1;
  int64_t pad_lo = 0;
  int64_t pad_hi = 0;
};

// Receptive field of one output sample along one axis: input sample i
// influences output i'' exactly when
//   i in alpha*(i''-1) + beta +/- (delta-1)/2   (1-based indices).
// alpha is the stride of the sliding window, beta its center offset and
// delta its size. Rational values appear for transposed fields.
struct RfTransform {
  Rational alpha{1};
  Rational beta{1};
  Rational delta{1};

  bool operator==(const RfTransform& o) const {
    return alpha == o.alpha && beta == o.beta && delta == o.delta;
  }
};

// Receptive field of a filter with the given size/stride/padding.
RfTransform rf_of_filter(const FilterSpec& spec);

// Number of valid window placements over a signal of length `extent`.
// Throws if the padded signal is smaller than the window.
int64_t output_size_filter(int64_t extent, const FilterSpec& spec);

// Receptive field of a transposed filter with upsampling factor `up`,
// leading crop `crop_lo` and window size `size`. The field is the
// relaxed rational enclosure of the true (rounded) dependency set.
RfTransform rf_of_convt(int64_t up, int64_t crop_lo, int64_t size);

// Output extent of a transposed filter; throws when non-positive.
int64_t output_size_convt(int64_t extent, int64_t up, int64_t crop_lo,
                          int64_t crop_hi, int64_t size);

// Receptive field seen from the output side of a block; an involution.
RfTransform rf_transpose(const RfTransform& t);

// Receptive field of g-after-f: `first` is applied to the input, `second`
// consumes its output.
RfTransform rf_compose(const RfTransform& first, const RfTransform& second);

// Tightest sliding-window field enclosing two fields over a shared input.
// Requires equal strides; throws otherwise.
RfTransform rf_overlay(const RfTransform& f, const RfTransform& g);

// Translation of a symmetric Caffe pooling padding into the asymmetric
// padding used here, together with Caffe's output size (ceil rule with
// the last window pulled back when it starts past the real signal).
struct CaffePoolEquiv {
  int64_t pad_lo = 0;
  int64_t pad_hi = 0;
  int64_t output = 0;
};
CaffePoolEquiv caffe_pool_equiv(int64_t extent, int64_t window, int64_t stride,
                                int64_t caffe_pad);

}  // namespace convkit
