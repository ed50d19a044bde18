#include "convkit/pool.hpp"

#include "convkit/conv.hpp"

namespace convkit {

namespace {

void check_pool_geom(const PoolGeom& g) {
  if (g.window_h < 1 || g.window_w < 1 || g.stride_h < 1 || g.stride_w < 1 ||
      g.pad_top < 0 || g.pad_bottom < 0 || g.pad_left < 0 || g.pad_right < 0) {
    throw ShapeError("invalid pooling geometry");
  }
  if (g.pad_top > g.window_h - 1 || g.pad_bottom > g.window_h - 1 ||
      g.pad_left > g.window_w - 1 || g.pad_right > g.window_w - 1) {
    throw ShapeError("pooling pad exceeds window size minus one");
  }
}

struct WindowBounds {
  int64_t i0, i1, j0, j1;  // half-open, clipped to the real signal
};

WindowBounds window_at(const Shape& xs, const PoolGeom& g, int64_t oi,
                       int64_t oj) {
  WindowBounds b;
  b.i0 = std::max<int64_t>(0, g.stride_h * oi - g.pad_top);
  b.i1 = std::min<int64_t>(xs.h, g.stride_h * oi - g.pad_top + g.window_h);
  b.j0 = std::max<int64_t>(0, g.stride_w * oj - g.pad_left);
  b.j1 = std::min<int64_t>(xs.w, g.stride_w * oj - g.pad_left + g.window_w);
  return b;
}

}  // namespace

Shape pool_output_shape(const Shape& x, const PoolGeom& g) {
  check_pool_geom(g);
  Shape out;
  out.h = conv_output_extent(x.h, g.window_h, g.stride_h, g.pad_top,
                             g.pad_bottom);
  out.w = conv_output_extent(x.w, g.window_w, g.stride_w, g.pad_left,
                             g.pad_right);
  out.c = x.c;
  out.n = x.n;
  return out;
}

template <class T>
Tensor<T> pool_forward(const Tensor<T>& x, const PoolGeom& g) {
  const Shape& xs = x.shape();
  Shape ys = pool_output_shape(xs, g);
  Tensor<T> y(ys);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      for (int64_t oj = 0; oj < ys.w; ++oj) {
        for (int64_t oi = 0; oi < ys.h; ++oi) {
          WindowBounds b = window_at(xs, g, oi, oj);
          if (g.mode == PoolMode::max) {
            T best = x.at(b.i0, b.j0, c, n);
            for (int64_t j = b.j0; j < b.j1; ++j) {
              for (int64_t i = b.i0; i < b.i1; ++i) {
                T v = x.at(i, j, c, n);
                if (v > best) best = v;
              }
            }
            y.at(oi, oj, c, n) = best;
          } else {
            T sum = T(0);
            for (int64_t j = b.j0; j < b.j1; ++j) {
              for (int64_t i = b.i0; i < b.i1; ++i) sum += x.at(i, j, c, n);
            }
            T area = static_cast<T>((b.i1 - b.i0) * (b.j1 - b.j0));
            y.at(oi, oj, c, n) = sum / area;
          }
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> pool_backward(const Tensor<T>& x, const PoolGeom& g,
                        const Tensor<T>& dy) {
  const Shape& xs = x.shape();
  Shape ys = pool_output_shape(xs, g);
  if (dy.shape() != ys) {
    throw ShapeError("pool backward: projection " + dy.shape().str() +
                     " does not match output " + ys.str());
  }
  Tensor<T> dx(xs);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      for (int64_t oj = 0; oj < ys.w; ++oj) {
        for (int64_t oi = 0; oi < ys.h; ++oi) {
          WindowBounds b = window_at(xs, g, oi, oj);
          T p = dy.at(oi, oj, c, n);
          if (g.mode == PoolMode::max) {
            int64_t bi = b.i0, bj = b.j0;
            T best = x.at(b.i0, b.j0, c, n);
            for (int64_t j = b.j0; j < b.j1; ++j) {
              for (int64_t i = b.i0; i < b.i1; ++i) {
                T v = x.at(i, j, c, n);
                if (v > best) {
                  best = v;
                  bi = i;
                  bj = j;
                }
              }
            }
            dx.at(bi, bj, c, n) += p;
          } else {
            T area = static_cast<T>((b.i1 - b.i0) * (b.j1 - b.j0));
            T share = p / area;
            for (int64_t j = b.j0; j < b.j1; ++j) {
              for (int64_t i = b.i0; i < b.i1; ++i) {
                dx.at(i, j, c, n) += share;
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

template Tensor<float> pool_forward<float>(const Tensor<float>&,
                                           const PoolGeom&);
template Tensor<double> pool_forward<double>(const Tensor<double>&,
                                             const PoolGeom&);
template Tensor<float> pool_backward<float>(const Tensor<float>&,
                                            const PoolGeom&,
                                            const Tensor<float>&);
template Tensor<double> pool_backward<double>(const Tensor<double>&,
                                              const PoolGeom&,
                                              const Tensor<double>&);

}  // namespace convkit
