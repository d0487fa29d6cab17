#pragma once

// Independent reference implementations for checking the production kernels.
// Everything here is written as plain nested loops straight from the
// operation definitions and must not call into the cnp kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cnp/tensor.hpp"

namespace oracle {

using cnp::Shape;
using cnp::TensorT;

// Direct cross-correlation: out[b,oc,oy,ox] = sum_ic,ky,kx
//   x[b,ic,oy*s-p+ky,ox*s-p+kx] * w[oc,ic,ky,kx] + bias[oc]
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const std::vector<T>& bias, int stride,
                  int pad) {
  const int out_h = (x.shape.h + 2 * pad - w.shape.h) / stride + 1;
  const int out_w = (x.shape.w + 2 * pad - w.shape.w) / stride + 1;
  TensorT<T> out({x.shape.n, w.shape.n, out_h, out_w});
  for (int b = 0; b < x.shape.n; ++b)
    for (int oc = 0; oc < w.shape.n; ++oc)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          T acc = bias.empty() ? T(0) : bias[oc];
          for (int ic = 0; ic < x.shape.c; ++ic)
            for (int ky = 0; ky < w.shape.h; ++ky)
              for (int kx = 0; kx < w.shape.w; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w) continue;
                acc += x.at(b, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          out.at(b, oc, oy, ox) = acc;
        }
  return out;
}

// Scatter-add transposed convolution, stride 2, pad 1, output padding 1
// (output exactly 2x input): out[2*iy+ky-1, 2*ix+kx-1] += x * w.
template <typename T>
TensorT<T> tconv2d(const TensorT<T>& x, const TensorT<T>& w, const std::vector<T>& bias) {
  const int out_h = 2 * x.shape.h, out_w = 2 * x.shape.w;
  TensorT<T> out({x.shape.n, w.shape.c, out_h, out_w});
  for (int b = 0; b < x.shape.n; ++b) {
    for (int ic = 0; ic < x.shape.c; ++ic)
      for (int oc = 0; oc < w.shape.c; ++oc)
        for (int iy = 0; iy < x.shape.h; ++iy)
          for (int ix = 0; ix < x.shape.w; ++ix)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int oy = 2 * iy + ky - 1;
                const int ox = 2 * ix + kx - 1;
                if (oy < 0 || oy >= out_h || ox < 0 || ox >= out_w) continue;
                out.at(b, oc, oy, ox) += x.at(b, ic, iy, ix) * w.at(ic, oc, ky, kx);
              }
    if (!bias.empty())
      for (int oc = 0; oc < w.shape.c; ++oc)
        for (int oy = 0; oy < out_h; ++oy)
          for (int ox = 0; ox < out_w; ++ox) out.at(b, oc, oy, ox) += bias[oc];
  }
  return out;
}

// 2x2/2 max pooling; ties keep the first window position in row-major scan.
template <typename T>
TensorT<T> maxpool2(const TensorT<T>& x) {
  TensorT<T> out({x.shape.n, x.shape.c, x.shape.h / 2, x.shape.w / 2});
  for (int b = 0; b < x.shape.n; ++b)
    for (int c = 0; c < x.shape.c; ++c)
      for (int oy = 0; oy < out.shape.h; ++oy)
        for (int ox = 0; ox < out.shape.w; ++ox) {
          T best = x.at(b, c, 2 * oy, 2 * ox);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              best = std::max(best, x.at(b, c, 2 * oy + dy, 2 * ox + dx));
          out.at(b, c, oy, ox) = best;
        }
  return out;
}

// Gradient routing for maxpool2 under the same scan-order tie-break.
template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& x, const TensorT<T>& dy) {
  TensorT<T> dx(x.shape);
  for (int b = 0; b < x.shape.n; ++b)
    for (int c = 0; c < x.shape.c; ++c)
      for (int oy = 0; oy < dy.shape.h; ++oy)
        for (int ox = 0; ox < dy.shape.w; ++ox) {
          int by = 2 * oy, bx = 2 * ox;
          for (int dy2 = 0; dy2 < 2; ++dy2)
            for (int dx2 = 0; dx2 < 2; ++dx2)
              if (x.at(b, c, 2 * oy + dy2, 2 * ox + dx2) > x.at(b, c, by, bx)) {
                by = 2 * oy + dy2;
                bx = 2 * ox + dx2;
              }
          dx.at(b, c, by, bx) += dy.at(b, c, oy, ox);
        }
  return dx;
}

// max(0, x) + a * min(0, x) per channel.
template <typename T>
TensorT<T> prelu(const TensorT<T>& x, const std::vector<T>& slopes) {
  TensorT<T> out(x.shape);
  for (int b = 0; b < x.shape.n; ++b)
    for (int c = 0; c < x.shape.c; ++c)
      for (int y = 0; y < x.shape.h; ++y)
        for (int xx = 0; xx < x.shape.w; ++xx) {
          const T v = x.at(b, c, y, xx);
          out.at(b, c, y, xx) = std::max(T(0), v) + slopes[c] * std::min(T(0), v);
        }
  return out;
}

// Forward differences with zero at the trailing column/row.
template <typename T>
TensorT<T> image_gradient(const TensorT<T>& x) {
  TensorT<T> out({x.shape.n, 2 * x.shape.c, x.shape.h, x.shape.w});
  for (int b = 0; b < x.shape.n; ++b)
    for (int c = 0; c < x.shape.c; ++c)
      for (int y = 0; y < x.shape.h; ++y)
        for (int xx = 0; xx < x.shape.w; ++xx) {
          out.at(b, c, y, xx) =
              xx + 1 < x.shape.w ? x.at(b, c, y, xx + 1) - x.at(b, c, y, xx) : T(0);
          out.at(b, x.shape.c + c, y, xx) =
              y + 1 < x.shape.h ? x.at(b, c, y + 1, xx) - x.at(b, c, y, xx) : T(0);
        }
  return out;
}

// mean((pred-target)^2) + lambda * mean((grad pred - grad target)^2)
template <typename T>
double loss(const TensorT<T>& pred, const TensorT<T>& target, double lambda) {
  double intensity = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = double(pred.data[i]) - double(target.data[i]);
    intensity += d * d;
  }
  intensity /= double(pred.size());
  const auto gp = image_gradient(pred);
  const auto gt = image_gradient(target);
  double grad = 0.0;
  for (std::size_t i = 0; i < gp.data.size(); ++i) {
    const double d = double(gp.data[i]) - double(gt.data[i]);
    grad += d * d;
  }
  grad /= double(gp.size());
  return intensity + lambda * grad;
}

inline double psnr(const cnp::Tensor& a, const cnp::Tensor& b, double max_val) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_val * max_val / mse));
}

// Exact 2x bilinear upsampling with zero extrapolation past the last sample:
// out[2q] = in[q], out[2q+1] = (in[q] + in[q+1]) / 2.
template <typename T>
TensorT<T> bilinear_up2(const TensorT<T>& x) {
  auto up1d = [](const std::vector<T>& in, int n) {
    std::vector<T> out(2 * n, T(0));
    for (int p = 0; p < 2 * n; ++p) {
      if (p % 2 == 0) {
        out[p] = in[p / 2];
      } else {
        const T a = in[(p - 1) / 2];
        const T b = (p + 1) / 2 < n ? in[(p + 1) / 2] : T(0);
        out[p] = (a + b) / T(2);
      }
    }
    return out;
  };
  TensorT<T> out({x.shape.n, x.shape.c, 2 * x.shape.h, 2 * x.shape.w});
  for (int b = 0; b < x.shape.n; ++b)
    for (int c = 0; c < x.shape.c; ++c) {
      // rows then columns (the kernel is separable)
      std::vector<std::vector<T>> rows(x.shape.h);
      for (int y = 0; y < x.shape.h; ++y) {
        std::vector<T> row(x.shape.w);
        for (int xx = 0; xx < x.shape.w; ++xx) row[xx] = x.at(b, c, y, xx);
        rows[y] = up1d(row, x.shape.w);
      }
      for (int ox = 0; ox < 2 * x.shape.w; ++ox) {
        std::vector<T> col(x.shape.h);
        for (int y = 0; y < x.shape.h; ++y) col[y] = rows[y][ox];
        const auto upcol = up1d(col, x.shape.h);
        for (int oy = 0; oy < 2 * x.shape.h; ++oy) out.at(b, c, oy, ox) = upcol[oy];
      }
    }
  return out;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
  return m;
}

template <typename T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double denom = std::max({std::abs(double(a.data[i])), std::abs(double(b.data[i])), 1e-8});
    m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])) / denom);
  }
  return m;
}

}  // namespace oracle
