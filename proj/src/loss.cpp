#include "convkit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

namespace convkit {

namespace {

int64_t as_label(double v, const char* what) {
  double r = std::nearbyint(v);
  if (r != v) throw DataError(std::string(what) + " label is not an integer");
  return static_cast<int64_t>(r);
}

uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class T>
T stable_log1p_exp(T v) {
  // log(1 + e^v) without overflow for large v.
  if (v > T(0)) return v + std::log1p(std::exp(-v));
  return std::log1p(std::exp(v));
}

template <class T>
void check_classification(const Shape& xs, const Shape& cs) {
  if (cs.h != xs.h || cs.w != xs.w || cs.c != 1 || cs.n != xs.n) {
    throw ShapeError("classification labels must be " +
                     Shape(xs.h, xs.w, 1, xs.n).str() + ", got " + cs.str());
  }
}

}  // namespace

bool loss_is_attribute(LossKind kind) {
  switch (kind) {
    case LossKind::binaryerror:
    case LossKind::binarylog:
    case LossKind::logistic:
    case LossKind::hinge:
      return true;
    default:
      return false;
  }
}

bool loss_is_error(LossKind kind) {
  return kind == LossKind::classerror || kind == LossKind::topk ||
         kind == LossKind::binaryerror;
}

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::classerror: return "classerror";
    case LossKind::topk: return "topk";
    case LossKind::log: return "log";
    case LossKind::softmaxlog: return "softmaxlog";
    case LossKind::mhinge: return "mhinge";
    case LossKind::mshinge: return "mshinge";
    case LossKind::binaryerror: return "binaryerror";
    case LossKind::binarylog: return "binarylog";
    case LossKind::logistic: return "logistic";
    case LossKind::hinge: return "hinge";
  }
  return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(LossKind::hinge); ++k) {
    LossKind kind = static_cast<LossKind>(k);
    if (name == loss_kind_name(kind)) return kind;
  }
  throw DataError("unknown loss kind '" + name + "'");
}

template <class T>
T loss_forward(const Tensor<T>& x, const Tensor<T>& labels, LossKind kind,
               const Tensor<T>* weights, const LossOptions& opts) {
  const Shape& xs = x.shape();
  const Shape& cs = labels.shape();
  if (weights && weights->shape() != cs) {
    throw ShapeError("instance weights must match the label tensor shape");
  }
  T total = T(0);

  if (!loss_is_attribute(kind)) {
    check_classification<T>(xs, cs);
    const int64_t C = xs.c;
    for (int64_t n = 0; n < xs.n; ++n) {
      for (int64_t j = 0; j < xs.w; ++j) {
        for (int64_t i = 0; i < xs.h; ++i) {
          int64_t c = as_label(labels.at(i, j, 0, n), "class");
          if (c == 0) continue;
          if (c < 1 || c > C) {
            throw DataError("class label " + std::to_string(c) +
                            " out of range 1.." + std::to_string(C));
          }
          T wgt = weights ? weights->at(i, j, 0, n) : T(1);
          T xc = x.at(i, j, c - 1, n);
          T l = T(0);
          switch (kind) {
            case LossKind::classerror: {
              int64_t best = 0;
              T bv = x.at(i, j, 0, n);
              if (opts.random_ties) {
                int64_t ties = 1;
                uint64_t h = splitmix64(opts.tie_seed ^
                                        static_cast<uint64_t>(x.index(i, j, 0, n)));
                for (int64_t k = 1; k < C; ++k) {
                  T v = x.at(i, j, k, n);
                  if (v > bv) {
                    bv = v;
                    best = k;
                    ties = 1;
                  } else if (v == bv) {
                    ++ties;
                    h = splitmix64(h);
                    if (h % static_cast<uint64_t>(ties) == 0) best = k;
                  }
                }
              } else {
                for (int64_t k = 1; k < C; ++k) {
                  T v = x.at(i, j, k, n);
                  if (v > bv) {
                    bv = v;
                    best = k;
                  }
                }
              }
              l = (best == c - 1) ? T(0) : T(1);
              break;
            }
            case LossKind::topk: {
              int64_t rank = 0;
              for (int64_t k = 0; k < C; ++k) {
                if (x.at(i, j, k, n) >= xc) ++rank;
              }
              l = rank <= opts.top_k ? T(0) : T(1);
              break;
            }
            case LossKind::log:
              if (!(xc > T(0))) {
                throw DataError("log loss needs a positive ground-truth score");
              }
              l = -std::log(xc);
              break;
            case LossKind::softmaxlog: {
              T mx = x.at(i, j, 0, n);
              for (int64_t k = 1; k < C; ++k) mx = std::max(mx, x.at(i, j, k, n));
              T sum = T(0);
              for (int64_t k = 0; k < C; ++k) {
                sum += std::exp(x.at(i, j, k, n) - mx);
              }
              l = -xc + mx + std::log(sum);
              break;
            }
            case LossKind::mhinge:
              l = std::max(T(0), T(1) - xc);
              break;
            case LossKind::mshinge: {
              T other = -std::numeric_limits<T>::infinity();
              for (int64_t k = 0; k < C; ++k) {
                if (k == c - 1) continue;
                other = std::max(other, x.at(i, j, k, n));
              }
              if (C == 1) other = T(0);
              l = std::max(T(0), T(1) - xc + other);
              break;
            }
            default:
              break;
          }
          total += wgt * l;
        }
      }
    }
    return total;
  }

  if (cs != xs) {
    throw ShapeError("attribute labels must match the prediction shape");
  }
  for (int64_t k = 0; k < x.size(); ++k) {
    int64_t c = as_label(labels[k], "attribute");
    if (c == 0) continue;
    if (c != 1 && c != -1) {
      throw DataError("attribute label must be -1, 0 or +1");
    }
    T wgt = weights ? (*weights)[k] : T(1);
    T v = x[k];
    T cv = static_cast<T>(c);
    T l = T(0);
    switch (kind) {
      case LossKind::binaryerror: {
        T sgn = v - static_cast<T>(opts.threshold) >= T(0) ? T(1) : T(-1);
        l = sgn == cv ? T(0) : T(1);
        break;
      }
      case LossKind::binarylog: {
        if (v < T(0) || v > T(1)) {
          throw DataError("binary log loss input must lie in [0,1]");
        }
        T q = cv * (v - T(0.5)) + T(0.5);
        l = -std::log(q);
        break;
      }
      case LossKind::logistic:
        l = stable_log1p_exp(-cv * v);
        break;
      case LossKind::hinge:
        l = std::max(T(0), T(1) - cv * v);
        break;
      default:
        break;
    }
    total += wgt * l;
  }
  return total;
}

template <class T>
Tensor<T> loss_backward(const Tensor<T>& x, const Tensor<T>& labels,
                        LossKind kind, const Tensor<T>* weights, T p,
                        const LossOptions& /*opts*/) {
  const Shape& xs = x.shape();
  const Shape& cs = labels.shape();
  if (weights && weights->shape() != cs) {
    throw ShapeError("instance weights must match the label tensor shape");
  }
  Tensor<T> dx(xs);
  if (loss_is_error(kind)) return dx;  // zero almost everywhere

  if (!loss_is_attribute(kind)) {
    check_classification<T>(xs, cs);
    const int64_t C = xs.c;
    for (int64_t n = 0; n < xs.n; ++n) {
      for (int64_t j = 0; j < xs.w; ++j) {
        for (int64_t i = 0; i < xs.h; ++i) {
          int64_t c = as_label(labels.at(i, j, 0, n), "class");
          if (c == 0) continue;
          if (c < 1 || c > C) {
            throw DataError("class label " + std::to_string(c) +
                            " out of range 1.." + std::to_string(C));
          }
          T scale = p * (weights ? weights->at(i, j, 0, n) : T(1));
          T xc = x.at(i, j, c - 1, n);
          switch (kind) {
            case LossKind::log:
              if (!(xc > T(0))) {
                throw DataError("log loss needs a positive ground-truth score");
              }
              dx.at(i, j, c - 1, n) -= scale / xc;
              break;
            case LossKind::softmaxlog: {
              T mx = x.at(i, j, 0, n);
              for (int64_t k = 1; k < C; ++k) mx = std::max(mx, x.at(i, j, k, n));
              T sum = T(0);
              for (int64_t k = 0; k < C; ++k) {
                sum += std::exp(x.at(i, j, k, n) - mx);
              }
              for (int64_t k = 0; k < C; ++k) {
                T soft = std::exp(x.at(i, j, k, n) - mx) / sum;
                dx.at(i, j, k, n) += scale * (soft - (k == c - 1 ? T(1) : T(0)));
              }
              break;
            }
            case LossKind::mhinge:
              if (xc < T(1)) dx.at(i, j, c - 1, n) -= scale;
              break;
            case LossKind::mshinge: {
              // Subgradient of the margin: the runner-up score is the
              // argmax over the other classes.
              int64_t best = -1;
              T other = -std::numeric_limits<T>::infinity();
              for (int64_t k = 0; k < C; ++k) {
                if (k == c - 1) continue;
                if (x.at(i, j, k, n) > other) {
                  other = x.at(i, j, k, n);
                  best = k;
                }
              }
              if (best >= 0 && xc < T(1) + other) {
                dx.at(i, j, c - 1, n) -= scale;
                dx.at(i, j, best, n) += scale;
              }
              break;
            }
            default:
              break;
          }
        }
      }
    }
    return dx;
  }

  if (cs != xs) {
    throw ShapeError("attribute labels must match the prediction shape");
  }
  for (int64_t k = 0; k < x.size(); ++k) {
    int64_t c = as_label(labels[k], "attribute");
    if (c == 0) continue;
    if (c != 1 && c != -1) {
      throw DataError("attribute label must be -1, 0 or +1");
    }
    T scale = p * (weights ? (*weights)[k] : T(1));
    T v = x[k];
    T cv = static_cast<T>(c);
    switch (kind) {
      case LossKind::binarylog: {
        if (v < T(0) || v > T(1)) {
          throw DataError("binary log loss input must lie in [0,1]");
        }
        T q = cv * (v - T(0.5)) + T(0.5);
        dx[k] = -scale * cv / q;
        break;
      }
      case LossKind::logistic: {
        // sigma(-cv*v), evaluated without overflow
        T t = -cv * v;
        T sig = t >= T(0) ? T(1) / (T(1) + std::exp(-t))
                          : std::exp(t) / (T(1) + std::exp(t));
        dx[k] = -scale * cv * sig;
        break;
      }
      case LossKind::hinge:
        if (cv * v < T(1)) dx[k] = -scale * cv;
        break;
      default:
        break;
    }
  }
  return dx;
}

template <class T>
Tensor<T> pdist_forward(const Tensor<T>& x, const Tensor<T>& target, double p,
                        bool no_root) {
  if (x.shape() != target.shape()) {
    throw ShapeError("pdist: shapes differ, " + x.shape().str() + " vs " +
                     target.shape().str());
  }
  if (!(p > 0)) throw ShapeError("pdist exponent must be positive");
  const Shape& s = x.shape();
  Tensor<T> y(Shape(s.h, s.w, 1, s.n));
  const T tp = static_cast<T>(p);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        T acc = T(0);
        for (int64_t d = 0; d < s.c; ++d) {
          T diff = std::abs(x.at(i, j, d, n) - target.at(i, j, d, n));
          if (p == 1.0) {
            acc += diff;
          } else if (p == 2.0) {
            acc += diff * diff;
          } else {
            acc += std::pow(diff, tp);
          }
        }
        y.at(i, j, 0, n) = no_root ? acc : std::pow(acc, T(1) / tp);
      }
    }
  }
  return y;
}

template <class T>
void pdist_backward(const Tensor<T>& x, const Tensor<T>& target, double p,
                    bool no_root, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>* dtarget) {
  const Shape& s = x.shape();
  Tensor<T> y = pdist_forward(x, target, p, no_root);
  if (dy.shape() != y.shape()) {
    throw ShapeError("pdist backward: projection " + dy.shape().str() +
                     " does not match output " + y.shape().str());
  }
  Tensor<T> grad(s);
  const T tp = static_cast<T>(p);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        T g = dy.at(i, j, 0, n);
        T yv = y.at(i, j, 0, n);
        for (int64_t d = 0; d < s.c; ++d) {
          T diff = x.at(i, j, d, n) - target.at(i, j, d, n);
          T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          T a = std::abs(diff);
          T v;
          if (no_root) {
            if (p == 1.0) {
              v = sgn;
            } else if (p == 2.0) {
              v = T(2) * diff;
            } else {
              v = tp * std::pow(a, tp - T(1)) * sgn;
            }
          } else {
            if (yv == T(0)) {
              v = T(0);  // coincident vectors: pick the zero subgradient
            } else if (p == 1.0) {
              v = sgn;
            } else if (p == 2.0) {
              v = diff / yv;
            } else {
              v = std::pow(a, tp - T(1)) * sgn / std::pow(yv, tp - T(1));
            }
          }
          grad.at(i, j, d, n) = g * v;
        }
      }
    }
  }
  if (dtarget) {
    *dtarget = Tensor<T>(s);
    for (int64_t k = 0; k < grad.size(); ++k) (*dtarget)[k] = -grad[k];
  }
  if (dx) *dx = std::move(grad);
}

#define CONVKIT_INSTANTIATE(T)                                                \
  template T loss_forward<T>(const Tensor<T>&, const Tensor<T>&, LossKind,    \
                             const Tensor<T>*, const LossOptions&);           \
  template Tensor<T> loss_backward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                      LossKind, const Tensor<T>*, T,          \
                                      const LossOptions&);                    \
  template Tensor<T> pdist_forward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                      double, bool);                          \
  template void pdist_backward<T>(const Tensor<T>&, const Tensor<T>&, double, \
                                  bool, const Tensor<T>&, Tensor<T>*,         \
                                  Tensor<T>*);

CONVKIT_INSTANTIATE(float)
CONVKIT_INSTANTIATE(double)
#undef CONVKIT_INSTANTIATE

}  // namespace convkit
