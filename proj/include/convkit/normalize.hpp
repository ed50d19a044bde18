#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

// Cross-channel response normalization: each channel is scaled by
// (kappa + alpha * sum of squares over its channel group)^-beta. The
// group of channel k is a window of `group_size` channels centered on k
// and clipped to the valid range.
struct LrnParams {
  int64_t group_size = 5;
  double kappa = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};

template <class T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnParams& p);

template <class T>
Tensor<T> lrn_backward(const Tensor<T>& x, const LrnParams& p,
                       const Tensor<T>& dy);

// Per-channel batch moments: mean and (biased) variance over all spatial
// locations and batch items.
template <class T>
struct BnormMoments {
  std::vector<T> mean;
  std::vector<T> var;
};

// y = w_k * (x - mean_k) / sqrt(var_k + epsilon) + b_k with moments taken
// from the batch itself. w and b must have one element per channel.
template <class T>
Tensor<T> bnorm_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& b, double epsilon,
                        BnormMoments<T>* moments = nullptr);

// Same normalization with externally fixed moments (inference path).
template <class T>
Tensor<T> bnorm_infer(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b, double epsilon,
                      const BnormMoments<T>& moments);

template <class T>
void bnorm_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    double epsilon, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>* dw, Tensor<T>* db);

// Rescales each sample by the local energy pooled over a centered
// spatial window: y = x * (1 + alpha * n^2)^-beta where n^2 is the
// boundary-renormalized average of x^2 over the window.
struct SpnormParams {
  int64_t window_h = 1;
  int64_t window_w = 1;
  double alpha = 1.0;
  double beta = 0.5;
};

template <class T>
Tensor<T> spnorm_forward(const Tensor<T>& x, const SpnormParams& p);

template <class T>
Tensor<T> spnorm_backward(const Tensor<T>& x, const SpnormParams& p,
                          const Tensor<T>& dy);

// Channel softmax applied independently at each spatial location and
// batch item, stabilized by subtracting the channel maximum.
template <class T>
Tensor<T> softmax_forward(const Tensor<T>& x);

// Consumes the forward output y.
template <class T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy);

}  // namespace convkit
