#pragma once

#include "convkit/tensor.hpp"

namespace convkit {

// Per-sample penalty applied convolutionally and summed over sites and
// batch items. Classification kinds score a C-channel prediction against
// labels in {1..C} stored as an HxWx1xN tensor; attribute kinds score
// every element against labels in {-1,+1} of the prediction's own shape.
// Label 0 always means "ignore this sample".
enum class LossKind {
  classerror,   // 0/1 top-1 error
  topk,         // 0/1 top-K error
  log,          // -log x_c, x interpreted as posterior probabilities
  softmaxlog,   // fused softmax + log loss
  mhinge,       // max{0, 1 - x_c}
  mshinge,      // max{0, 1 - x_c + max_{k!=c} x_k}
  binaryerror,  // sign(x - tau) != c
  binarylog,    // -log of the predicted probability, x in [0,1]
  logistic,     // -log sigmoid(c x)
  hinge,        // max{0, 1 - c x}
};

bool loss_is_attribute(LossKind kind);
bool loss_is_error(LossKind kind);  // zero-derivative metrics
const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct LossOptions {
  int64_t top_k = 5;        // for LossKind::topk
  double threshold = 0.0;   // for LossKind::binaryerror
  bool random_ties = false; // classerror: break argmax ties randomly
  uint64_t tie_seed = 0;
};

// Weighted sum of per-sample penalties. `weights`, when non-null, must
// match the label tensor's shape; ignored samples contribute nothing.
template <class T>
T loss_forward(const Tensor<T>& x, const Tensor<T>& labels, LossKind kind,
               const Tensor<T>* weights = nullptr,
               const LossOptions& opts = {});

// Projected derivative of the loss with respect to x; `p` is the scalar
// projection. Error kinds return exact zeros.
template <class T>
Tensor<T> loss_backward(const Tensor<T>& x, const Tensor<T>& labels,
                        LossKind kind, const Tensor<T>* weights, T p,
                        const LossOptions& opts = {});

// Channel-wise p-distance between x and a target, one value per spatial
// site and batch item. `no_root` omits the outer 1/p power.
template <class T>
Tensor<T> pdist_forward(const Tensor<T>& x, const Tensor<T>& target, double p,
                        bool no_root);

// dtarget is always the negation of dx. The rooted form's gradient is
// defined as zero at coincident vectors.
template <class T>
void pdist_backward(const Tensor<T>& x, const Tensor<T>& target, double p,
                    bool no_root, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>* dtarget);

}  // namespace convkit
