#include "convkit/conv.hpp"

#include <Eigen/Core>

#include <string>

namespace convkit {

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

void check_conv_geom(const ConvGeom& g) {
  if (g.stride_h < 1 || g.stride_w < 1 || g.groups < 1 || g.pad_top < 0 ||
      g.pad_bottom < 0 || g.pad_left < 0 || g.pad_right < 0) {
    throw ShapeError("invalid convolution geometry");
  }
}

void check_convt_geom(const ConvTransposeGeom& g) {
  if (g.up_h < 1 || g.up_w < 1 || g.crop_top < 0 || g.crop_bottom < 0 ||
      g.crop_left < 0 || g.crop_right < 0) {
    throw ShapeError("invalid convolution-transpose geometry");
  }
}

// Patch extraction for one image of the batch; A is (outH*outW) x
// (fh*fw*D) column-major.
template <class T>
void im2row_image(const T* x, int64_t H, int64_t W, int64_t D, int64_t fh,
                  int64_t fw, const ConvGeom& g, int64_t outH, int64_t outW,
                  T* A) {
  const int64_t rows = outH * outW;
  for (int64_t d = 0; d < D; ++d) {
    const T* plane = x + H * W * d;
    for (int64_t fj = 0; fj < fw; ++fj) {
      for (int64_t fi = 0; fi < fh; ++fi) {
        T* col = A + rows * (fi + fh * (fj + fw * d));
        for (int64_t oj = 0; oj < outW; ++oj) {
          int64_t jj = g.stride_w * oj + fj - g.pad_left;
          if (jj < 0 || jj >= W) {
            for (int64_t oi = 0; oi < outH; ++oi) col[oi + outH * oj] = T(0);
            continue;
          }
          const T* src = plane + H * jj;
          for (int64_t oi = 0; oi < outH; ++oi) {
            int64_t ii = g.stride_h * oi + fi - g.pad_top;
            col[oi + outH * oj] = (ii >= 0 && ii < H) ? src[ii] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint scatter for one image; accumulates into x.
template <class T>
void row2im_image(const T* A, int64_t H, int64_t W, int64_t D, int64_t fh,
                  int64_t fw, const ConvGeom& g, int64_t outH, int64_t outW,
                  T* x) {
  const int64_t rows = outH * outW;
  for (int64_t d = 0; d < D; ++d) {
    T* plane = x + H * W * d;
    for (int64_t fj = 0; fj < fw; ++fj) {
      for (int64_t fi = 0; fi < fh; ++fi) {
        const T* col = A + rows * (fi + fh * (fj + fw * d));
        for (int64_t oj = 0; oj < outW; ++oj) {
          int64_t jj = g.stride_w * oj + fj - g.pad_left;
          if (jj < 0 || jj >= W) continue;
          T* dst = plane + H * jj;
          for (int64_t oi = 0; oi < outH; ++oi) {
            int64_t ii = g.stride_h * oi + fi - g.pad_top;
            if (ii >= 0 && ii < H) dst[ii] += col[oi + outH * oj];
          }
        }
      }
    }
  }
}

// Filters of the convolution that maps a convt output back onto its
// input, laid out as an (fh*fw*K) x D matrix: entry ((i',j',k), d) is
// f[i',j',d,k].
template <class T>
Mat<T> convt_conv_filter_matrix(const Tensor<T>& f) {
  const Shape& fs = f.shape();
  const int64_t fh = fs.h, fw = fs.w, D = fs.c, K = fs.n;
  Mat<T> Ft(fh * fw * K, D);
  for (int64_t d = 0; d < D; ++d) {
    for (int64_t k = 0; k < K; ++k) {
      for (int64_t fj = 0; fj < fw; ++fj) {
        for (int64_t fi = 0; fi < fh; ++fi) {
          Ft(fi + fh * (fj + fw * k), d) = f.at(fi, fj, d, k);
        }
      }
    }
  }
  return Ft;
}

}  // namespace

int64_t conv_output_extent(int64_t extent, int64_t window, int64_t stride,
                           int64_t pad_lo, int64_t pad_hi) {
  if (extent + pad_lo + pad_hi < window) {
    throw ShapeError("window of size " + std::to_string(window) +
                     " larger than padded input of size " +
                     std::to_string(extent + pad_lo + pad_hi));
  }
  return (extent - window + pad_lo + pad_hi) / stride + 1;
}

Shape conv_output_shape(const Shape& x, const Shape& f, const ConvGeom& g) {
  check_conv_geom(g);
  if (f.c * g.groups != x.c) {
    throw ShapeError("filter channels " + std::to_string(f.c) + " x groups " +
                     std::to_string(g.groups) + " do not match input channels " +
                     std::to_string(x.c));
  }
  if (f.n % g.groups != 0) {
    throw ShapeError("filter count " + std::to_string(f.n) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  Shape out;
  out.h = conv_output_extent(x.h, f.h, g.stride_h, g.pad_top, g.pad_bottom);
  out.w = conv_output_extent(x.w, f.w, g.stride_w, g.pad_left, g.pad_right);
  out.c = f.n;
  out.n = x.n;
  return out;
}

Shape convt_output_shape(const Shape& x, const Shape& f,
                         const ConvTransposeGeom& g) {
  check_convt_geom(g);
  if (f.c != x.c) {
    throw ShapeError("transposed filter expects " + std::to_string(f.c) +
                     " input channels, got " + std::to_string(x.c));
  }
  Shape out;
  out.h = g.up_h * (x.h - 1) + f.h - g.crop_top - g.crop_bottom;
  out.w = g.up_w * (x.w - 1) + f.w - g.crop_left - g.crop_right;
  out.c = f.n;
  out.n = x.n;
  if (out.h < 1 || out.w < 1) {
    throw ShapeError("transposed convolution output " + out.str() +
                     " is not positive");
  }
  return out;
}

template <class T>
Tensor<T> im2row(const Tensor<T>& image, int64_t filter_h, int64_t filter_w,
                 const ConvGeom& g) {
  check_conv_geom(g);
  const Shape& s = image.shape();
  if (s.n != 1) throw ShapeError("im2row expects a single image");
  int64_t outH = conv_output_extent(s.h, filter_h, g.stride_h, g.pad_top,
                                    g.pad_bottom);
  int64_t outW = conv_output_extent(s.w, filter_w, g.stride_w, g.pad_left,
                                    g.pad_right);
  Tensor<T> mat(Shape(outH * outW, filter_h * filter_w * s.c));
  im2row_image(image.data(), s.h, s.w, s.c, filter_h, filter_w, g, outH, outW,
               mat.data());
  return mat;
}

template <class T>
Tensor<T> row2im(const Tensor<T>& mat, const Shape& target, int64_t filter_h,
                 int64_t filter_w, const ConvGeom& g) {
  check_conv_geom(g);
  if (target.n != 1) throw ShapeError("row2im expects a single image");
  int64_t outH = conv_output_extent(target.h, filter_h, g.stride_h, g.pad_top,
                                    g.pad_bottom);
  int64_t outW = conv_output_extent(target.w, filter_w, g.stride_w, g.pad_left,
                                    g.pad_right);
  if (mat.shape().h != outH * outW ||
      mat.shape().w != filter_h * filter_w * target.c) {
    throw ShapeError("row2im: matrix " + mat.shape().str() +
                     " does not match target " + target.str());
  }
  Tensor<T> img(target);
  row2im_image(mat.data(), target.h, target.w, target.c, filter_h, filter_w, g,
               outH, outW, img.data());
  return img;
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& f,
                       const Tensor<T>* bias, const ConvGeom& g) {
  const Shape& xs = x.shape();
  const Shape& fs = f.shape();
  Shape ys = conv_output_shape(xs, fs, g);
  if (bias && bias->size() != fs.n) {
    throw ShapeError("bias has " + std::to_string(bias->size()) +
                     " elements for " + std::to_string(fs.n) + " filters");
  }
  const int64_t rows = ys.h * ys.w;
  const int64_t patch = fs.h * fs.w * xs.c;
  const int64_t group_cols = fs.h * fs.w * fs.c;
  const int64_t group_filters = fs.n / g.groups;

  Tensor<T> y(ys);
  Mat<T> A(rows, patch);
  ConstMatMap<T> F(f.data(), group_cols, fs.n);
  for (int64_t n = 0; n < xs.n; ++n) {
    im2row_image(x.data() + xs.h * xs.w * xs.c * n, xs.h, xs.w, xs.c, fs.h,
                 fs.w, g, ys.h, ys.w, A.data());
    MatMap<T> Y(y.data() + rows * ys.c * n, rows, ys.c);
    for (int64_t t = 0; t < g.groups; ++t) {
      Y.middleCols(t * group_filters, group_filters).noalias() =
          A.middleCols(t * group_cols, group_cols) *
          F.middleCols(t * group_filters, group_filters);
    }
    if (bias) {
      for (int64_t k = 0; k < ys.c; ++k) {
        Y.col(k).array() += bias->data()[k];
      }
    }
  }
  return y;
}

template <class T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& f, const ConvGeom& g,
                   const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* df,
                   Tensor<T>* db) {
  const Shape& xs = x.shape();
  const Shape& fs = f.shape();
  Shape ys = conv_output_shape(xs, fs, g);
  if (dy.shape() != ys) {
    throw ShapeError("conv backward: projection " + dy.shape().str() +
                     " does not match output " + ys.str());
  }
  const int64_t rows = ys.h * ys.w;
  const int64_t patch = fs.h * fs.w * xs.c;
  const int64_t group_cols = fs.h * fs.w * fs.c;
  const int64_t group_filters = fs.n / g.groups;

  if (dx) *dx = Tensor<T>(xs);
  if (df) *df = Tensor<T>(fs);
  if (db) {
    *db = Tensor<T>(Shape(1, 1, fs.n, 1));
    for (int64_t n = 0; n < ys.n; ++n) {
      ConstMatMap<T> P(dy.data() + rows * ys.c * n, rows, ys.c);
      for (int64_t k = 0; k < ys.c; ++k) db->data()[k] += P.col(k).sum();
    }
  }
  if (!dx && !df) return;

  ConstMatMap<T> F(f.data(), group_cols, fs.n);
  Mat<T> A(rows, patch);
  Mat<T> M(rows, patch);
  for (int64_t n = 0; n < xs.n; ++n) {
    ConstMatMap<T> P(dy.data() + rows * ys.c * n, rows, ys.c);
    if (df) {
      im2row_image(x.data() + xs.h * xs.w * xs.c * n, xs.h, xs.w, xs.c, fs.h,
                   fs.w, g, ys.h, ys.w, A.data());
      MatMap<T> dF(df->data(), group_cols, fs.n);
      for (int64_t t = 0; t < g.groups; ++t) {
        dF.middleCols(t * group_filters, group_filters).noalias() +=
            A.middleCols(t * group_cols, group_cols).transpose() *
            P.middleCols(t * group_filters, group_filters);
      }
    }
    if (dx) {
      for (int64_t t = 0; t < g.groups; ++t) {
        M.middleCols(t * group_cols, group_cols).noalias() =
            P.middleCols(t * group_filters, group_filters) *
            F.middleCols(t * group_filters, group_filters).transpose();
      }
      row2im_image(M.data(), xs.h, xs.w, xs.c, fs.h, fs.w, g, ys.h, ys.w,
                   dx->data() + xs.h * xs.w * xs.c * n);
    }
  }
}

template <class T>
Tensor<T> convt_forward(const Tensor<T>& x, const Tensor<T>& f,
                        const ConvTransposeGeom& g) {
  const Shape& xs = x.shape();
  const Shape& fs = f.shape();
  Shape ys = convt_output_shape(xs, fs, g);

  // The matching convolution runs from the output back onto x.
  ConvGeom cg;
  cg.stride_h = g.up_h;
  cg.stride_w = g.up_w;
  cg.pad_top = g.crop_top;
  cg.pad_bottom = g.crop_bottom;
  cg.pad_left = g.crop_left;
  cg.pad_right = g.crop_right;

  Mat<T> Ft = convt_conv_filter_matrix(f);  // (fh*fw*K) x D
  const int64_t rows = xs.h * xs.w;
  Tensor<T> y(ys);
  Mat<T> M(rows, Ft.rows());
  for (int64_t n = 0; n < xs.n; ++n) {
    ConstMatMap<T> X(x.data() + rows * xs.c * n, rows, xs.c);
    M.noalias() = X * Ft.transpose();
    row2im_image(M.data(), ys.h, ys.w, ys.c, fs.h, fs.w, cg, xs.h, xs.w,
                 y.data() + ys.h * ys.w * ys.c * n);
  }
  return y;
}

template <class T>
void convt_backward(const Tensor<T>& x, const Tensor<T>& f,
                    const ConvTransposeGeom& g, const Tensor<T>& dy,
                    Tensor<T>* dx, Tensor<T>* df) {
  const Shape& xs = x.shape();
  const Shape& fs = f.shape();
  Shape ys = convt_output_shape(xs, fs, g);
  if (dy.shape() != ys) {
    throw ShapeError("convt backward: projection " + dy.shape().str() +
                     " does not match output " + ys.str());
  }
  ConvGeom cg;
  cg.stride_h = g.up_h;
  cg.stride_w = g.up_w;
  cg.pad_top = g.crop_top;
  cg.pad_bottom = g.crop_bottom;
  cg.pad_left = g.crop_left;
  cg.pad_right = g.crop_right;

  if (dx) {
    // Forward convolution of the projection with the same filters.
    Tensor<T> bank(Shape(fs.h, fs.w, fs.n, fs.c));
    for (int64_t k = 0; k < fs.n; ++k) {
      for (int64_t d = 0; d < fs.c; ++d) {
        for (int64_t fj = 0; fj < fs.w; ++fj) {
          for (int64_t fi = 0; fi < fs.h; ++fi) {
            bank.at(fi, fj, k, d) = f.at(fi, fj, d, k);
          }
        }
      }
    }
    *dx = conv_forward(dy, bank, static_cast<const Tensor<T>*>(nullptr), cg);
  }
  if (df) {
    *df = Tensor<T>(fs);
    const int64_t rows = xs.h * xs.w;
    Mat<T> A(rows, fs.h * fs.w * fs.n);
    Mat<T> dFt = Mat<T>::Zero(fs.h * fs.w * fs.n, fs.c);
    for (int64_t n = 0; n < xs.n; ++n) {
      im2row_image(dy.data() + ys.h * ys.w * ys.c * n, ys.h, ys.w, ys.c, fs.h,
                   fs.w, cg, xs.h, xs.w, A.data());
      ConstMatMap<T> X(x.data() + rows * xs.c * n, rows, xs.c);
      dFt.noalias() += A.transpose() * X;
    }
    for (int64_t d = 0; d < fs.c; ++d) {
      for (int64_t k = 0; k < fs.n; ++k) {
        for (int64_t fj = 0; fj < fs.w; ++fj) {
          for (int64_t fi = 0; fi < fs.h; ++fi) {
            df->at(fi, fj, d, k) = dFt(fi + fs.h * (fj + fs.w * k), d);
          }
        }
      }
    }
  }
}

#define CONVKIT_INSTANTIATE(T)                                                 \
  template Tensor<T> im2row<T>(const Tensor<T>&, int64_t, int64_t,            \
                               const ConvGeom&);                               \
  template Tensor<T> row2im<T>(const Tensor<T>&, const Shape&, int64_t,       \
                               int64_t, const ConvGeom&);                      \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>*, const ConvGeom&);       \
  template void conv_backward<T>(const Tensor<T>&, const Tensor<T>&,          \
                                 const ConvGeom&, const Tensor<T>&,           \
                                 Tensor<T>*, Tensor<T>*, Tensor<T>*);          \
  template Tensor<T> convt_forward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                      const ConvTransposeGeom&);               \
  template void convt_backward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                  const ConvTransposeGeom&, const Tensor<T>&, \
                                  Tensor<T>*, Tensor<T>*);

CONVKIT_INSTANTIATE(float)
CONVKIT_INSTANTIATE(double)
#undef CONVKIT_INSTANTIATE

}  // namespace convkit
