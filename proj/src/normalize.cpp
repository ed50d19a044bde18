#include "convkit/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "convkit/pool.hpp"

namespace convkit {

namespace {

// Channel group of k: a window of `size` channels centered on k (one more
// above than below for even sizes), clipped to [0, count).
struct ChannelWindow {
  int64_t lo, hi;  // inclusive
};

ChannelWindow lrn_group(int64_t k, int64_t size, int64_t count) {
  int64_t down = (size - 1) / 2;
  int64_t up = size - 1 - down;
  return {std::max<int64_t>(0, k - down), std::min(count - 1, k + up)};
}

void check_lrn(const LrnParams& p) {
  if (p.group_size < 1) throw ShapeError("lrn group size must be positive");
  if (p.kappa <= 0) throw ShapeError("lrn kappa must be positive");
}

PoolGeom spnorm_pool_geom(const SpnormParams& p) {
  if (p.window_h < 1 || p.window_w < 1) {
    throw ShapeError("spnorm window must be positive");
  }
  PoolGeom g;
  g.window_h = p.window_h;
  g.window_w = p.window_w;
  g.pad_top = (p.window_h - 1) / 2;
  g.pad_bottom = p.window_h - g.pad_top - 1;
  g.pad_left = (p.window_w - 1) / 2;
  g.pad_right = p.window_w - g.pad_left - 1;
  g.mode = PoolMode::avg;
  return g;
}

}  // namespace

template <class T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnParams& p) {
  check_lrn(p);
  const Shape& s = x.shape();
  Tensor<T> y(s);
  std::vector<T> sq(static_cast<size_t>(s.c));
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        for (int64_t k = 0; k < s.c; ++k) {
          T v = x.at(i, j, k, n);
          sq[static_cast<size_t>(k)] = v * v;
        }
        for (int64_t k = 0; k < s.c; ++k) {
          ChannelWindow w = lrn_group(k, p.group_size, s.c);
          T acc = T(0);
          for (int64_t t = w.lo; t <= w.hi; ++t) acc += sq[static_cast<size_t>(t)];
          T scale = std::pow(static_cast<T>(p.kappa) + static_cast<T>(p.alpha) * acc,
                             static_cast<T>(-p.beta));
          y.at(i, j, k, n) = x.at(i, j, k, n) * scale;
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> lrn_backward(const Tensor<T>& x, const LrnParams& p,
                       const Tensor<T>& dy) {
  check_lrn(p);
  const Shape& s = x.shape();
  if (dy.shape() != s) throw ShapeError("lrn backward: projection shape mismatch");
  Tensor<T> dx(s);
  const T kappa = static_cast<T>(p.kappa);
  const T alpha = static_cast<T>(p.alpha);
  const T beta = static_cast<T>(p.beta);
  std::vector<T> L(static_cast<size_t>(s.c));
  std::vector<T> eta(static_cast<size_t>(s.c));
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        for (int64_t k = 0; k < s.c; ++k) {
          ChannelWindow w = lrn_group(k, p.group_size, s.c);
          T acc = T(0);
          for (int64_t t = w.lo; t <= w.hi; ++t) {
            T v = x.at(i, j, t, n);
            acc += v * v;
          }
          L[static_cast<size_t>(k)] = kappa + alpha * acc;
          eta[static_cast<size_t>(k)] = dy.at(i, j, k, n) *
              std::pow(L[static_cast<size_t>(k)], -beta - T(1)) *
              x.at(i, j, k, n);
        }
        // d lies in the group of k exactly when k lies in the reflected
        // window of d.
        int64_t down = (p.group_size - 1) / 2;
        int64_t up = p.group_size - 1 - down;
        for (int64_t d = 0; d < s.c; ++d) {
          T acc = T(0);
          for (int64_t k = std::max<int64_t>(0, d - up);
               k <= std::min(s.c - 1, d + down); ++k) {
            acc += eta[static_cast<size_t>(k)];
          }
          dx.at(i, j, d, n) =
              dy.at(i, j, d, n) * std::pow(L[static_cast<size_t>(d)], -beta) -
              T(2) * alpha * beta * x.at(i, j, d, n) * acc;
        }
      }
    }
  }
  return dx;
}

namespace {

template <class T>
void check_bnorm_args(const Shape& xs, const Tensor<T>& w, const Tensor<T>& b,
                      double epsilon) {
  if (w.size() != xs.c || b.size() != xs.c) {
    throw ShapeError("bnorm expects one multiplier and bias per channel");
  }
  if (!(epsilon > 0)) throw ShapeError("bnorm epsilon must be positive");
}

template <class T>
BnormMoments<T> batch_moments(const Tensor<T>& x) {
  const Shape& s = x.shape();
  BnormMoments<T> m;
  m.mean.assign(static_cast<size_t>(s.c), T(0));
  m.var.assign(static_cast<size_t>(s.c), T(0));
  const T count = static_cast<T>(s.h * s.w * s.n);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t k = 0; k < s.c; ++k) {
      for (int64_t j = 0; j < s.w; ++j) {
        for (int64_t i = 0; i < s.h; ++i) {
          m.mean[static_cast<size_t>(k)] += x.at(i, j, k, n);
        }
      }
    }
  }
  for (auto& v : m.mean) v /= count;
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t k = 0; k < s.c; ++k) {
      T mu = m.mean[static_cast<size_t>(k)];
      for (int64_t j = 0; j < s.w; ++j) {
        for (int64_t i = 0; i < s.h; ++i) {
          T d = x.at(i, j, k, n) - mu;
          m.var[static_cast<size_t>(k)] += d * d;
        }
      }
    }
  }
  for (auto& v : m.var) v /= count;
  return m;
}

template <class T>
Tensor<T> bnorm_apply(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b, double epsilon,
                      const BnormMoments<T>& m) {
  const Shape& s = x.shape();
  Tensor<T> y(s);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t k = 0; k < s.c; ++k) {
      T mu = m.mean[static_cast<size_t>(k)];
      T inv = T(1) / std::sqrt(m.var[static_cast<size_t>(k)] +
                               static_cast<T>(epsilon));
      T wk = w.data()[k];
      T bk = b.data()[k];
      for (int64_t j = 0; j < s.w; ++j) {
        for (int64_t i = 0; i < s.h; ++i) {
          y.at(i, j, k, n) = wk * (x.at(i, j, k, n) - mu) * inv + bk;
        }
      }
    }
  }
  return y;
}

}  // namespace

template <class T>
Tensor<T> bnorm_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& b, double epsilon,
                        BnormMoments<T>* moments) {
  check_bnorm_args(x.shape(), w, b, epsilon);
  BnormMoments<T> m = batch_moments(x);
  Tensor<T> y = bnorm_apply(x, w, b, epsilon, m);
  if (moments) *moments = std::move(m);
  return y;
}

template <class T>
Tensor<T> bnorm_infer(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b, double epsilon,
                      const BnormMoments<T>& moments) {
  check_bnorm_args(x.shape(), w, b, epsilon);
  if (static_cast<int64_t>(moments.mean.size()) != x.shape().c ||
      static_cast<int64_t>(moments.var.size()) != x.shape().c) {
    throw ShapeError("bnorm moments do not match channel count");
  }
  return bnorm_apply(x, w, b, epsilon, moments);
}

template <class T>
void bnorm_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    double epsilon, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>* dw, Tensor<T>* db) {
  const Shape& s = x.shape();
  check_bnorm_args(s, w, b, epsilon);
  if (dy.shape() != s) throw ShapeError("bnorm backward: projection shape mismatch");
  BnormMoments<T> m = batch_moments(x);
  const T count = static_cast<T>(s.h * s.w * s.n);

  std::vector<T> sum_dy(static_cast<size_t>(s.c), T(0));
  std::vector<T> sum_dy_xhat(static_cast<size_t>(s.c), T(0));
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t k = 0; k < s.c; ++k) {
      T mu = m.mean[static_cast<size_t>(k)];
      T inv = T(1) / std::sqrt(m.var[static_cast<size_t>(k)] +
                               static_cast<T>(epsilon));
      for (int64_t j = 0; j < s.w; ++j) {
        for (int64_t i = 0; i < s.h; ++i) {
          T g = dy.at(i, j, k, n);
          sum_dy[static_cast<size_t>(k)] += g;
          sum_dy_xhat[static_cast<size_t>(k)] += g * (x.at(i, j, k, n) - mu) * inv;
        }
      }
    }
  }
  if (dw) {
    *dw = Tensor<T>(w.shape());
    for (int64_t k = 0; k < s.c; ++k) dw->data()[k] = sum_dy_xhat[static_cast<size_t>(k)];
  }
  if (db) {
    *db = Tensor<T>(b.shape());
    for (int64_t k = 0; k < s.c; ++k) db->data()[k] = sum_dy[static_cast<size_t>(k)];
  }
  if (dx) {
    *dx = Tensor<T>(s);
    for (int64_t n = 0; n < s.n; ++n) {
      for (int64_t k = 0; k < s.c; ++k) {
        T mu = m.mean[static_cast<size_t>(k)];
        T inv = T(1) / std::sqrt(m.var[static_cast<size_t>(k)] +
                                 static_cast<T>(epsilon));
        T wk = w.data()[k];
        T mean_dy = sum_dy[static_cast<size_t>(k)] / count;
        T mean_dy_xhat = sum_dy_xhat[static_cast<size_t>(k)] / count;
        for (int64_t j = 0; j < s.w; ++j) {
          for (int64_t i = 0; i < s.h; ++i) {
            T xhat = (x.at(i, j, k, n) - mu) * inv;
            dx->at(i, j, k, n) =
                wk * inv * (dy.at(i, j, k, n) - mean_dy - xhat * mean_dy_xhat);
          }
        }
      }
    }
  }
}

template <class T>
Tensor<T> spnorm_forward(const Tensor<T>& x, const SpnormParams& p) {
  PoolGeom g = spnorm_pool_geom(p);
  const Shape& s = x.shape();
  Tensor<T> sq(s);
  for (int64_t k = 0; k < x.size(); ++k) sq[k] = x[k] * x[k];
  Tensor<T> energy = pool_forward(sq, g);
  Tensor<T> y(s);
  const T alpha = static_cast<T>(p.alpha);
  const T beta = static_cast<T>(p.beta);
  for (int64_t k = 0; k < x.size(); ++k) {
    y[k] = x[k] * std::pow(T(1) + alpha * energy[k], -beta);
  }
  return y;
}

template <class T>
Tensor<T> spnorm_backward(const Tensor<T>& x, const SpnormParams& p,
                          const Tensor<T>& dy) {
  PoolGeom g = spnorm_pool_geom(p);
  const Shape& s = x.shape();
  if (dy.shape() != s) throw ShapeError("spnorm backward: projection shape mismatch");
  Tensor<T> sq(s);
  for (int64_t k = 0; k < x.size(); ++k) sq[k] = x[k] * x[k];
  Tensor<T> energy = pool_forward(sq, g);
  const T alpha = static_cast<T>(p.alpha);
  const T beta = static_cast<T>(p.beta);
  Tensor<T> eta(s);
  for (int64_t k = 0; k < x.size(); ++k) {
    eta[k] = dy[k] * std::pow(T(1) + alpha * energy[k], -beta - T(1)) * x[k];
  }
  // The window sums over eta are exactly the adjoint of the energy pooling.
  Tensor<T> spread = pool_backward(sq, g, eta);
  Tensor<T> dx(s);
  for (int64_t k = 0; k < x.size(); ++k) {
    dx[k] = dy[k] * std::pow(T(1) + alpha * energy[k], -beta) -
            T(2) * alpha * beta * x[k] * spread[k];
  }
  return dx;
}

template <class T>
Tensor<T> softmax_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> y(s);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        T mx = x.at(i, j, 0, n);
        for (int64_t k = 1; k < s.c; ++k) mx = std::max(mx, x.at(i, j, k, n));
        T sum = T(0);
        for (int64_t k = 0; k < s.c; ++k) {
          T e = std::exp(x.at(i, j, k, n) - mx);
          y.at(i, j, k, n) = e;
          sum += e;
        }
        for (int64_t k = 0; k < s.c; ++k) y.at(i, j, k, n) /= sum;
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  const Shape& s = y.shape();
  if (dy.shape() != s) throw ShapeError("softmax backward: projection shape mismatch");
  Tensor<T> dx(s);
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t j = 0; j < s.w; ++j) {
      for (int64_t i = 0; i < s.h; ++i) {
        T dot = T(0);
        for (int64_t k = 0; k < s.c; ++k) dot += dy.at(i, j, k, n) * y.at(i, j, k, n);
        for (int64_t k = 0; k < s.c; ++k) {
          dx.at(i, j, k, n) = y.at(i, j, k, n) * (dy.at(i, j, k, n) - dot);
        }
      }
    }
  }
  return dx;
}

#define CONVKIT_INSTANTIATE(T)                                                \
  template Tensor<T> lrn_forward<T>(const Tensor<T>&, const LrnParams&);      \
  template Tensor<T> lrn_backward<T>(const Tensor<T>&, const LrnParams&,      \
                                     const Tensor<T>&);                       \
  template Tensor<T> bnorm_forward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&, double,               \
                                      BnormMoments<T>*);                      \
  template Tensor<T> bnorm_infer<T>(const Tensor<T>&, const Tensor<T>&,       \
                                    const Tensor<T>&, double,                 \
                                    const BnormMoments<T>&);                  \
  template void bnorm_backward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                  const Tensor<T>&, double, const Tensor<T>&, \
                                  Tensor<T>*, Tensor<T>*, Tensor<T>*);        \
  template Tensor<T> spnorm_forward<T>(const Tensor<T>&, const SpnormParams&);\
  template Tensor<T> spnorm_backward<T>(const Tensor<T>&, const SpnormParams&,\
                                        const Tensor<T>&);                    \
  template Tensor<T> softmax_forward<T>(const Tensor<T>&);                    \
  template Tensor<T> softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);

CONVKIT_INSTANTIATE(float)
CONVKIT_INSTANTIATE(double)
#undef CONVKIT_INSTANTIATE

}  // namespace convkit
