#include "convkit/geometry.hpp"

#include <string>

namespace convkit {

namespace {

void check_filter_spec(const FilterSpec& s) {
  if (s.size < 1 || s.stride < 1 || s.pad_lo < 0 || s.pad_hi < 0) {
    throw ShapeError("invalid filter spec: size " + std::to_string(s.size) +
                     ", stride " + std::to_string(s.stride) + ", pads " +
                     std::to_string(s.pad_lo) + "/" + std::to_string(s.pad_hi));
  }
}

}  // namespace

RfTransform rf_of_filter(const FilterSpec& spec) {
  check_filter_spec(spec);
  RfTransform t;
  t.alpha = Rational(spec.stride);
  t.beta = Rational(spec.size + 1, 2) - Rational(spec.pad_lo);
  t.delta = Rational(spec.size);
  return t;
}

int64_t output_size_filter(int64_t extent, const FilterSpec& spec) {
  check_filter_spec(spec);
  if (extent < 1) throw ShapeError("non-positive input extent");
  if (extent + spec.pad_lo + spec.pad_hi < spec.size) {
    throw ShapeError("window of size " + std::to_string(spec.size) +
                     " larger than padded input of size " +
                     std::to_string(extent + spec.pad_lo + spec.pad_hi));
  }
  return (extent - spec.size + spec.pad_lo + spec.pad_hi) / spec.stride + 1;
}

RfTransform rf_of_convt(int64_t up, int64_t crop_lo, int64_t size) {
  if (up < 1 || size < 1 || crop_lo < 0) {
    throw ShapeError("invalid transposed-filter parameters");
  }
  RfTransform t;
  t.alpha = Rational(1, up);
  t.beta = Rational(2 * crop_lo - size + 1, 2 * up) + Rational(1);
  t.delta = Rational(size - 1, up) + Rational(1);
  return t;
}

int64_t output_size_convt(int64_t extent, int64_t up, int64_t crop_lo,
                          int64_t crop_hi, int64_t size) {
  if (up < 1 || size < 1 || crop_lo < 0 || crop_hi < 0 || extent < 1) {
    throw ShapeError("invalid transposed-filter parameters");
  }
  int64_t out = up * (extent - 1) + size - crop_lo - crop_hi;
  if (out < 1) {
    throw ShapeError("transposed filter output size " + std::to_string(out) +
                     " is not positive");
  }
  return out;
}

RfTransform rf_transpose(const RfTransform& t) {
  if (!(t.alpha > Rational(0))) throw ShapeError("rf stride must be positive");
  RfTransform r;
  r.alpha = Rational(1) / t.alpha;
  r.beta = (Rational(1) + t.alpha - t.beta) / t.alpha;
  r.delta = (t.delta + t.alpha - Rational(1)) / t.alpha;
  return r;
}

RfTransform rf_compose(const RfTransform& first, const RfTransform& second) {
  RfTransform h;
  h.alpha = first.alpha * second.alpha;
  h.beta = first.alpha * (second.beta - Rational(1)) + first.beta;
  h.delta = first.alpha * (second.delta - Rational(1)) + first.delta;
  return h;
}

RfTransform rf_overlay(const RfTransform& f, const RfTransform& g) {
  if (f.alpha != g.alpha) {
    throw ShapeError("incompatible receptive fields: strides " + f.alpha.str() +
                     " and " + g.alpha.str());
  }
  Rational half(1, 2);
  Rational a = rational_min(f.beta - (f.delta - Rational(1)) * half,
                            g.beta - (g.delta - Rational(1)) * half);
  Rational b = rational_max(f.beta + (f.delta - Rational(1)) * half,
                            g.beta + (g.delta - Rational(1)) * half);
  RfTransform t;
  t.alpha = f.alpha;
  t.beta = (a + b) * half;
  t.delta = b - a + Rational(1);
  return t;
}

CaffePoolEquiv caffe_pool_equiv(int64_t extent, int64_t window, int64_t stride,
                                int64_t caffe_pad) {
  if (window < 1 || stride < 1 || extent < 1 || caffe_pad < 0) {
    throw ShapeError("invalid pooling parameters");
  }
  if (caffe_pad > window - 1) {
    throw ShapeError("caffe pad " + std::to_string(caffe_pad) +
                     " exceeds window size minus one");
  }
  if (extent + 2 * caffe_pad < window) {
    throw ShapeError("pooling window larger than padded input");
  }
  CaffePoolEquiv eq;
  eq.pad_lo = caffe_pad;
  eq.pad_hi = std::min(caffe_pad + stride - 1, window - 1);
  // Ceil rule; the last window is dropped when it starts past the real
  // signal, which can overshoot by at most one.
  int64_t out = Rational(extent - window + 2 * caffe_pad, stride).ceil() + 1;
  if (stride * (out - 1) + 1 - caffe_pad > extent) --out;
  eq.output = out;
  return eq;
}

}  // namespace convkit
