#pragma once

// Test-only reference implementations; everything here is independent of
// the kernels it checks and deliberately written as plain loops.

#include <functional>
#include <vector>

#include "convkit/conv.hpp"
#include "convkit/graph.hpp"
#include "convkit/rng.hpp"
#include "convkit/tensor.hpp"

namespace convkit::testing {

template <class T>
Tensor<T> random_uniform(Shape s, Xoshiro256& rng, T lo = T(-1), T hi = T(1)) {
  Tensor<T> t(s);
  for (int64_t k = 0; k < t.size(); ++k) {
    t[k] = lo + (hi - lo) * static_cast<T>(rng.uniform());
  }
  return t;
}

// Max of fd_rel_err over all elements.
inline double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (int64_t k = 0; k < a.size(); ++k) {
    worst = std::max(worst, fd_rel_err(a[k], b[k]));
  }
  return worst;
}

// Central finite differences of inner(p, fwd(x)) with respect to x.
template <class T>
Tensor<T> fd_projected(const std::function<Tensor<T>(const Tensor<T>&)>& fwd,
                       Tensor<T> x, const Tensor<T>& p, T step) {
  Tensor<T> grad(x.shape());
  for (int64_t e = 0; e < x.size(); ++e) {
    T saved = x[e];
    T h = step * std::max(T(1), std::abs(saved));
    x[e] = saved + h;
    T up = inner(p, fwd(x));
    x[e] = saved - h;
    T down = inner(p, fwd(x));
    x[e] = saved;
    grad[e] = (up - down) / (T(2) * h);
  }
  return grad;
}

// Scalar version for losses.
template <class T>
Tensor<T> fd_scalar(const std::function<T(const Tensor<T>&)>& fwd, Tensor<T> x,
                    T step) {
  Tensor<T> grad(x.shape());
  for (int64_t e = 0; e < x.size(); ++e) {
    T saved = x[e];
    T h = step * std::max(T(1), std::abs(saved));
    x[e] = saved + h;
    T up = fwd(x);
    x[e] = saved - h;
    T down = fwd(x);
    x[e] = saved;
    grad[e] = (up - down) / (T(2) * h);
  }
  return grad;
}

// Convolution straight from the summation formula, zero padding read on
// the fly, channel groups resolved per output filter.
template <class T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& f, const Tensor<T>* b,
                     const ConvGeom& g) {
  const Shape& xs = x.shape();
  const Shape& fs = f.shape();
  Shape ys = conv_output_shape(xs, fs, g);
  const int64_t per_group = fs.n / g.groups;
  Tensor<T> y(ys);
  for (int64_t n = 0; n < ys.n; ++n) {
    for (int64_t k = 0; k < ys.c; ++k) {
      int64_t base = (k / per_group) * fs.c;
      for (int64_t oj = 0; oj < ys.w; ++oj) {
        for (int64_t oi = 0; oi < ys.h; ++oi) {
          T acc = b ? b->data()[k] : T(0);
          for (int64_t d = 0; d < fs.c; ++d) {
            for (int64_t fj = 0; fj < fs.w; ++fj) {
              for (int64_t fi = 0; fi < fs.h; ++fi) {
                int64_t ii = g.stride_h * oi + fi - g.pad_top;
                int64_t jj = g.stride_w * oj + fj - g.pad_left;
                if (ii < 0 || ii >= xs.h || jj < 0 || jj >= xs.w) continue;
                acc += f.at(fi, fj, d, k) * x.at(ii, jj, base + d, n);
              }
            }
          }
          y.at(oi, oj, k, n) = acc;
        }
      }
    }
  }
  return y;
}

// Dense matrix of a linear map assembled column by column from basis
// vectors: column e holds fwd(e_e) flattened.
template <class T>
Tensor<T> assemble_matrix(const std::function<Tensor<T>(const Tensor<T>&)>& fwd,
                          Shape domain) {
  Tensor<T> basis(domain);
  Tensor<T> probe = fwd(basis);
  Tensor<T> m(Shape(probe.size(), domain.elems()));
  for (int64_t e = 0; e < domain.elems(); ++e) {
    basis[e] = T(1);
    Tensor<T> col = fwd(basis);
    basis[e] = T(0);
    for (int64_t r = 0; r < col.size(); ++r) m.at(r, e) = col[r];
  }
  return m;
}

// y = M^T x for a matrix stored rows x cols.
template <class T>
std::vector<T> matT_vec(const Tensor<T>& m, const std::vector<T>& x) {
  std::vector<T> y(static_cast<size_t>(m.shape().w), T(0));
  for (int64_t c = 0; c < m.shape().w; ++c) {
    T acc = T(0);
    for (int64_t r = 0; r < m.shape().h; ++r) {
      acc += m.at(r, c) * x[static_cast<size_t>(r)];
    }
    y[static_cast<size_t>(c)] = acc;
  }
  return y;
}

}  // namespace convkit::testing
