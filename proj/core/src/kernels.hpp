#pragma once

// Dense kernels shared by the tape ops. Accumulation order is fixed
// everywhere (batch-major, then input-channel, then kernel-row-major) so
// repeated runs produce bit-identical results in single-threaded mode.

#include <cstdint>
#include <vector>

#include "cnp/tensor.hpp"

namespace cnp::detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(T* cmat, const T* amat, const T* bmat, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* crow = cmat + std::int64_t(i) * n;
    const T* arow = amat + std::int64_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const T a = arow[p];
      if (a == T(0)) continue;
      const T* brow = bmat + std::int64_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(T* cmat, const T* amat, const T* bmat, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* crow = cmat + std::int64_t(i) * n;
    for (int p = 0; p < k; ++p) {
      const T a = amat[std::int64_t(p) * m + i];
      if (a == T(0)) continue;
      const T* brow = bmat + std::int64_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void transpose(T* out, const T* in, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[std::int64_t(c) * rows + r] = in[std::int64_t(r) * cols + c];
}

// cols[(ic*k + ky)*k + kx, oy*outW + ox] = x[ic, oy*s - p + ky, ox*s - p + kx]
template <typename T>
void im2col(T* cols, const T* x, int in_c, int in_h, int in_w, int k, int stride, int pad,
            int out_h, int out_w) {
  const std::int64_t n = std::int64_t(out_h) * out_w;
  for (int ic = 0; ic < in_c; ++ic) {
    const T* xp = x + std::int64_t(ic) * in_h * in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (std::int64_t(ic) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + std::int64_t(oy) * out_w;
          if (iy < 0 || iy >= in_h) {
            for (int ox = 0; ox < out_w; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = xp + std::int64_t(iy) * in_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: x[ic, iy, ix] += cols[row, o]
template <typename T>
void col2im_add(T* x, const T* cols, int in_c, int in_h, int in_w, int k, int stride, int pad,
                int out_h, int out_w) {
  const std::int64_t n = std::int64_t(out_h) * out_w;
  for (int ic = 0; ic < in_c; ++ic) {
    T* xp = x + std::int64_t(ic) * in_h * in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (std::int64_t(ic) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) continue;
          const T* src = row + std::int64_t(oy) * out_w;
          T* dst = xp + std::int64_t(iy) * in_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// y[b, oc, :, :] = w[oc, :, :, :] (x) x[b] + bias[oc]
template <typename T>
void conv2d_forward(TensorT<T>& y, const TensorT<T>& x, const TensorT<T>& w, const T* bias,
                    int stride, int pad) {
  const int in_c = x.shape.c, in_h = x.shape.h, in_w = x.shape.w;
  const int out_c = w.shape.n, k = w.shape.h;
  const int out_h = y.shape.h, out_w = y.shape.w;
  const std::int64_t kk = std::int64_t(in_c) * k * k;
  const std::int64_t n = std::int64_t(out_h) * out_w;
  std::vector<T> cols(kk * n);
  for (int b = 0; b < x.shape.n; ++b) {
    im2col(cols.data(), x.plane(b, 0), in_c, in_h, in_w, k, stride, pad, out_h, out_w);
    T* yb = y.plane(b, 0);
    std::fill(yb, yb + std::int64_t(out_c) * n, T(0));
    gemm_nn(yb, w.data.data(), cols.data(), out_c, int(kk), int(n));
    if (bias) {
      for (int oc = 0; oc < out_c; ++oc) {
        T* row = yb + std::int64_t(oc) * n;
        for (std::int64_t j = 0; j < n; ++j) row[j] += bias[oc];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, int stride,
                     int pad, TensorT<T>* dx, TensorT<T>* dw, T* db) {
  const int in_c = x.shape.c, in_h = x.shape.h, in_w = x.shape.w;
  const int out_c = w.shape.n, k = w.shape.h;
  const int out_h = dy.shape.h, out_w = dy.shape.w;
  const std::int64_t kk = std::int64_t(in_c) * k * k;
  const std::int64_t n = std::int64_t(out_h) * out_w;
  std::vector<T> cols(kk * n), scratch;
  for (int b = 0; b < x.shape.n; ++b) {
    const T* dyb = dy.plane(b, 0);
    if (db) {
      for (int oc = 0; oc < out_c; ++oc) {
        const T* row = dyb + std::int64_t(oc) * n;
        T acc = T(0);
        for (std::int64_t j = 0; j < n; ++j) acc += row[j];
        db[oc] += acc;
      }
    }
    if (dw) {
      im2col(cols.data(), x.plane(b, 0), in_c, in_h, in_w, k, stride, pad, out_h, out_w);
      scratch.resize(cols.size());
      transpose(scratch.data(), cols.data(), int(kk), int(n));  // -> [N, KK]
      gemm_nn(dw->data.data(), dyb, scratch.data(), out_c, int(n), int(kk));
    }
    if (dx) {
      scratch.resize(kk * n);
      std::fill(scratch.begin(), scratch.end(), T(0));
      gemm_tn(scratch.data(), w.data.data(), dyb, int(kk), out_c, int(n));
      col2im_add(dx->plane(b, 0), scratch.data(), in_c, in_h, in_w, k, stride, pad, out_h, out_w);
    }
  }
}

// Scatter-add transposed convolution, stride 2, pad 1, output padding 1:
// y[b, oc, 2*iy+ky-1, 2*ix+kx-1] += x[b, ic, iy, ix] * w[ic, oc, ky, kx].
// Equivalent to the input gradient of a stride-2 pad-1 3x3 convolution whose
// weight is w viewed as [ic=outC_fwd, oc=inC_fwd].
template <typename T>
void tconv2d_forward(TensorT<T>& y, const TensorT<T>& x, const TensorT<T>& w, const T* bias) {
  const int in_c = x.shape.c, in_h = x.shape.h, in_w = x.shape.w;
  const int out_c = w.shape.c, k = w.shape.h;
  const int out_h = y.shape.h, out_w = y.shape.w;
  const std::int64_t kk = std::int64_t(out_c) * k * k;
  const std::int64_t n = std::int64_t(in_h) * in_w;
  std::vector<T> cols(kk * n);
  for (int b = 0; b < x.shape.n; ++b) {
    std::fill(cols.begin(), cols.end(), T(0));
    gemm_tn(cols.data(), w.data.data(), x.plane(b, 0), int(kk), in_c, int(n));
    T* yb = y.plane(b, 0);
    std::fill(yb, yb + std::int64_t(out_c) * out_h * out_w, T(0));
    col2im_add(yb, cols.data(), out_c, out_h, out_w, k, 2, 1, in_h, in_w);
    if (bias) {
      for (int oc = 0; oc < out_c; ++oc) {
        T* row = yb + std::int64_t(oc) * out_h * out_w;
        for (std::int64_t j = 0; j < std::int64_t(out_h) * out_w; ++j) row[j] += bias[oc];
      }
    }
  }
}

template <typename T>
void tconv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                      TensorT<T>* dx, TensorT<T>* dw, T* db) {
  const int in_c = x.shape.c, in_h = x.shape.h, in_w = x.shape.w;
  const int out_c = w.shape.c, k = w.shape.h;
  const int out_h = dy.shape.h, out_w = dy.shape.w;
  const std::int64_t kk = std::int64_t(out_c) * k * k;
  const std::int64_t n = std::int64_t(in_h) * in_w;
  std::vector<T> cols(kk * n), scratch;
  for (int b = 0; b < x.shape.n; ++b) {
    const T* dyb = dy.plane(b, 0);
    if (db) {
      for (int oc = 0; oc < out_c; ++oc) {
        const T* row = dyb + std::int64_t(oc) * out_h * out_w;
        T acc = T(0);
        for (std::int64_t j = 0; j < std::int64_t(out_h) * out_w; ++j) acc += row[j];
        db[oc] += acc;
      }
    }
    im2col(cols.data(), dyb, out_c, out_h, out_w, k, 2, 1, in_h, in_w);
    if (dx) {
      gemm_nn(dx->plane(b, 0), w.data.data(), cols.data(), in_c, int(kk), int(n));
    }
    if (dw) {
      scratch.resize(cols.size());
      transpose(scratch.data(), cols.data(), int(kk), int(n));  // -> [N, KK]
      gemm_nn(dw->data.data(), x.plane(b, 0), scratch.data(), in_c, int(n), int(kk));
    }
  }
}

}  // namespace cnp::detail
