#include "convkit/bilinear.hpp"

#include <cmath>

namespace convkit {

namespace {

// Tent weight and its two nonzero integer support points around v.
template <class T>
struct TentSupport {
  int64_t i0, i1;
  T w0, w1;  // max{0, 1-|v-i|} at i0 and i1
  T d0, d1;  // derivative of the weight w.r.t. v (0 at and past the kinks)
};

template <class T>
TentSupport<T> tent_at(T v, int64_t extent) {
  TentSupport<T> s;
  T f = std::floor(v);
  s.i0 = static_cast<int64_t>(f);
  s.i1 = s.i0 + 1;
  auto eval = [&](int64_t i, T& w, T& d) {
    if (i < 0 || i >= extent) {
      w = T(0);
      d = T(0);
      return;
    }
    T t = v - static_cast<T>(i);
    T a = std::abs(t);
    w = a < T(1) ? T(1) - a : T(0);
    d = (a < T(1) && t != T(0)) ? (t > T(0) ? T(-1) : T(1)) : T(0);
  };
  eval(s.i0, s.w0, s.d0);
  eval(s.i1, s.w1, s.d1);
  return s;
}

void check_grid(const Shape& xs, const Shape& gs) {
  if (gs.h != 2) {
    throw ShapeError("sampling grid must have two coordinate channels, got " +
                     gs.str());
  }
  if (gs.n != xs.n) {
    throw ShapeError("sampling grid batch " + std::to_string(gs.n) +
                     " does not match input batch " + std::to_string(xs.n));
  }
}

}  // namespace

Shape bilinear_output_shape(const Shape& x, const Shape& grid) {
  check_grid(x, grid);
  return Shape(grid.w, grid.c, x.c, x.n);
}

template <class T>
Tensor<T> bilinear_forward(const Tensor<T>& x, const Tensor<T>& grid) {
  const Shape& xs = x.shape();
  Shape ys = bilinear_output_shape(xs, grid.shape());
  const T av = static_cast<T>(xs.h - 1) / T(2);
  const T au = static_cast<T>(xs.w - 1) / T(2);
  Tensor<T> y(ys);
  for (int64_t n = 0; n < ys.n; ++n) {
    for (int64_t oj = 0; oj < ys.w; ++oj) {
      for (int64_t oi = 0; oi < ys.h; ++oi) {
        T v = av * (grid.at(0, oi, oj, n) + T(1));
        T u = au * (grid.at(1, oi, oj, n) + T(1));
        TentSupport<T> sv = tent_at(v, xs.h);
        TentSupport<T> su = tent_at(u, xs.w);
        for (int64_t c = 0; c < xs.c; ++c) {
          T acc = T(0);
          if (sv.w0 != T(0) && su.w0 != T(0))
            acc += x.at(sv.i0, su.i0, c, n) * sv.w0 * su.w0;
          if (sv.w1 != T(0) && su.w0 != T(0))
            acc += x.at(sv.i1, su.i0, c, n) * sv.w1 * su.w0;
          if (sv.w0 != T(0) && su.w1 != T(0))
            acc += x.at(sv.i0, su.i1, c, n) * sv.w0 * su.w1;
          if (sv.w1 != T(0) && su.w1 != T(0))
            acc += x.at(sv.i1, su.i1, c, n) * sv.w1 * su.w1;
          y.at(oi, oj, c, n) = acc;
        }
      }
    }
  }
  return y;
}

template <class T>
void bilinear_backward(const Tensor<T>& x, const Tensor<T>& grid,
                       const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgrid) {
  const Shape& xs = x.shape();
  Shape ys = bilinear_output_shape(xs, grid.shape());
  if (dy.shape() != ys) {
    throw ShapeError("bilinear backward: projection " + dy.shape().str() +
                     " does not match output " + ys.str());
  }
  const T av = static_cast<T>(xs.h - 1) / T(2);
  const T au = static_cast<T>(xs.w - 1) / T(2);
  if (dx) *dx = Tensor<T>(xs);
  if (dgrid) *dgrid = Tensor<T>(grid.shape());
  for (int64_t n = 0; n < ys.n; ++n) {
    for (int64_t oj = 0; oj < ys.w; ++oj) {
      for (int64_t oi = 0; oi < ys.h; ++oi) {
        T v = av * (grid.at(0, oi, oj, n) + T(1));
        T u = au * (grid.at(1, oi, oj, n) + T(1));
        TentSupport<T> sv = tent_at(v, xs.h);
        TentSupport<T> su = tent_at(u, xs.w);
        T g1 = T(0), g2 = T(0);
        for (int64_t c = 0; c < xs.c; ++c) {
          T p = dy.at(oi, oj, c, n);
          if (p == T(0) && !dgrid) continue;
          auto tap = [&](int64_t i, int64_t j, T wv, T wu, T dv, T du) {
            if (i < 0 || i >= xs.h || j < 0 || j >= xs.w) return;
            T xv = x.at(i, j, c, n);
            if (dx) dx->at(i, j, c, n) += p * wv * wu;
            g1 += p * xv * dv * wu;
            g2 += p * xv * wv * du;
          };
          tap(sv.i0, su.i0, sv.w0, su.w0, sv.d0, su.d0);
          tap(sv.i1, su.i0, sv.w1, su.w0, sv.d1, su.d0);
          tap(sv.i0, su.i1, sv.w0, su.w1, sv.d0, su.d1);
          tap(sv.i1, su.i1, sv.w1, su.w1, sv.d1, su.d1);
        }
        if (dgrid) {
          dgrid->at(0, oi, oj, n) = av * g1;
          dgrid->at(1, oi, oj, n) = au * g2;
        }
      }
    }
  }
}

template <class T>
Tensor<T> identity_grid(int64_t out_h, int64_t out_w, int64_t batch) {
  Tensor<T> g(Shape(2, out_h, out_w, batch));
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t j = 0; j < out_w; ++j) {
      for (int64_t i = 0; i < out_h; ++i) {
        g.at(0, i, j, n) =
            out_h > 1 ? T(-1) + T(2) * static_cast<T>(i) / static_cast<T>(out_h - 1)
                      : T(0);
        g.at(1, i, j, n) =
            out_w > 1 ? T(-1) + T(2) * static_cast<T>(j) / static_cast<T>(out_w - 1)
                      : T(0);
      }
    }
  }
  return g;
}

template Tensor<float> bilinear_forward<float>(const Tensor<float>&,
                                               const Tensor<float>&);
template Tensor<double> bilinear_forward<double>(const Tensor<double>&,
                                                 const Tensor<double>&);
template void bilinear_backward<float>(const Tensor<float>&,
                                       const Tensor<float>&,
                                       const Tensor<float>&, Tensor<float>*,
                                       Tensor<float>*);
template void bilinear_backward<double>(const Tensor<double>&,
                                        const Tensor<double>&,
                                        const Tensor<double>&, Tensor<double>*,
                                        Tensor<double>*);
template Tensor<float> identity_grid<float>(int64_t, int64_t, int64_t);
template Tensor<double> identity_grid<double>(int64_t, int64_t, int64_t);

}  // namespace convkit
