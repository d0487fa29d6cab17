#include "cnp/tape.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace cnp {

template <typename T>
typename Tape<T>::Id Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::Id Tape<T>::leaf(TensorT<T> v, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::conv2d(Id x, Id weight, Id bias, int stride, int pad) {
  const auto& xs = nodes_[x].value.shape;
  const auto& ws = nodes_[weight].value.shape;
  if (ws.h != ws.w) throw ConfigError("conv2d: kernel must be square, got " + ws.str());
  if (ws.c != xs.c)
    throw ConfigError("conv2d: weight expects " + std::to_string(ws.c) +
                      " input channels but input has " + std::to_string(xs.c) + " (input " +
                      xs.str() + ", weight " + ws.str() + ")");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (bias >= 0) {
    const auto& bs = nodes_[bias].value.shape;
    if (bs.c != ws.n || bs.n != 1 || bs.h != 1 || bs.w != 1)
      throw ConfigError("conv2d: bias shape " + bs.str() + " does not match outC " +
                        std::to_string(ws.n));
  }
  const int out_h = detail::conv_out_dim(xs.h, ws.h, stride, pad);
  const int out_w = detail::conv_out_dim(xs.w, ws.w, stride, pad);
  if (out_h <= 0 || out_w <= 0)
    throw ConfigError("conv2d: output would be empty for input " + xs.str());
  Node n;
  n.kind = OpKind::Conv2d;
  n.a = x;
  n.b = weight;
  n.c = bias;
  n.stride = stride;
  n.pad = pad;
  n.requires_grad =
      nodes_[x].requires_grad || nodes_[weight].requires_grad || (bias >= 0 && nodes_[bias].requires_grad);
  n.value = TensorT<T>({xs.n, ws.n, out_h, out_w});
  detail::conv2d_forward(n.value, nodes_[x].value, nodes_[weight].value,
                         bias >= 0 ? nodes_[bias].value.data.data() : nullptr, stride, pad);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::transposed_conv2d(Id x, Id weight, Id bias) {
  const auto& xs = nodes_[x].value.shape;
  const auto& ws = nodes_[weight].value.shape;
  if (ws.h != 3 || ws.w != 3)
    throw ConfigError("transposed_conv2d: kernel is fixed at 3x3, got " + ws.str());
  if (ws.n != xs.c)
    throw ConfigError("transposed_conv2d: weight expects " + std::to_string(ws.n) +
                      " input channels but input has " + std::to_string(xs.c));
  if (bias >= 0) {
    const auto& bs = nodes_[bias].value.shape;
    if (bs.c != ws.c || bs.n != 1 || bs.h != 1 || bs.w != 1)
      throw ConfigError("transposed_conv2d: bias shape " + bs.str() + " does not match outC " +
                        std::to_string(ws.c));
  }
  Node n;
  n.kind = OpKind::TConv2d;
  n.a = x;
  n.b = weight;
  n.c = bias;
  n.requires_grad =
      nodes_[x].requires_grad || nodes_[weight].requires_grad || (bias >= 0 && nodes_[bias].requires_grad);
  n.value = TensorT<T>({xs.n, ws.c, xs.h * 2, xs.w * 2});
  detail::tconv2d_forward(n.value, nodes_[x].value, nodes_[weight].value,
                          bias >= 0 ? nodes_[bias].value.data.data() : nullptr);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::maxpool2(Id x) {
  const auto& xs = nodes_[x].value.shape;
  if (xs.h % 2 != 0 || xs.w % 2 != 0)
    throw ConfigError("maxpool2: spatial dims " + std::to_string(xs.h) + "x" +
                      std::to_string(xs.w) + " must be even; pad the input to a multiple of 2");
  Node n;
  n.kind = OpKind::MaxPool2;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({xs.n, xs.c, xs.h / 2, xs.w / 2});
  n.argmax.resize(static_cast<std::size_t>(n.value.size()));
  const auto& xv = nodes_[x].value;
  std::int64_t o = 0;
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      const T* xp = xv.plane(b, c);
      const std::int64_t base = (std::int64_t(b) * xs.c + c) * xs.h * xs.w;
      for (int oy = 0; oy < xs.h / 2; ++oy) {
        for (int ox = 0; ox < xs.w / 2; ++ox, ++o) {
          // Ties keep the first position in row-major scan order.
          T best = xp[std::int64_t(2 * oy) * xs.w + 2 * ox];
          std::int64_t best_idx = std::int64_t(2 * oy) * xs.w + 2 * ox;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::int64_t idx = std::int64_t(2 * oy + dy) * xs.w + 2 * ox + dx;
              if (xp[idx] > best) {
                best = xp[idx];
                best_idx = idx;
              }
            }
          }
          n.value.data[o] = best;
          n.argmax[o] = static_cast<std::int32_t>(base + best_idx);
        }
      }
    }
  }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::avgpool2(Id x) {
  const auto& xs = nodes_[x].value.shape;
  if (xs.h % 2 != 0 || xs.w % 2 != 0)
    throw ConfigError("avgpool2: spatial dims " + std::to_string(xs.h) + "x" +
                      std::to_string(xs.w) + " must be even; pad the input to a multiple of 2");
  Node n;
  n.kind = OpKind::AvgPool2;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({xs.n, xs.c, xs.h / 2, xs.w / 2});
  const auto& xv = nodes_[x].value;
  std::int64_t o = 0;
  for (int b = 0; b < xs.n; ++b)
    for (int c = 0; c < xs.c; ++c) {
      const T* xp = xv.plane(b, c);
      for (int oy = 0; oy < xs.h / 2; ++oy)
        for (int ox = 0; ox < xs.w / 2; ++ox, ++o) {
          const std::int64_t i0 = std::int64_t(2 * oy) * xs.w + 2 * ox;
          n.value.data[o] =
              (xp[i0] + xp[i0 + 1] + xp[i0 + xs.w] + xp[i0 + xs.w + 1]) * T(0.25);
        }
    }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::prelu(Id x, Id slopes) {
  const auto& xs = nodes_[x].value.shape;
  const auto& ss = nodes_[slopes].value.shape;
  if (ss.c != xs.c || ss.n != 1 || ss.h != 1 || ss.w != 1)
    throw ConfigError("prelu: slope shape " + ss.str() + " does not match " +
                      std::to_string(xs.c) + " channels");
  Node n;
  n.kind = OpKind::PRelu;
  n.a = x;
  n.b = slopes;
  n.requires_grad = nodes_[x].requires_grad || nodes_[slopes].requires_grad;
  n.value = TensorT<T>(xs);
  const auto& xv = nodes_[x].value;
  const auto& sv = nodes_[slopes].value;
  const std::int64_t hw = std::int64_t(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b)
    for (int c = 0; c < xs.c; ++c) {
      const T a = sv.data[c];
      const T* xp = xv.plane(b, c);
      T* yp = n.value.plane(b, c);
      for (std::int64_t i = 0; i < hw; ++i) yp[i] = xp[i] >= T(0) ? xp[i] : a * xp[i];
    }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add(Id a, Id b) {
  if (!(nodes_[a].value.shape == nodes_[b].value.shape))
    throw ConfigError("add: shape mismatch " + nodes_[a].value.shape.str() + " vs " +
                      nodes_[b].value.shape.str());
  Node n;
  n.kind = OpKind::Add;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = nodes_[a].value;
  const auto& bv = nodes_[b].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bv.data[i];
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::sub(Id a, Id b) {
  if (!(nodes_[a].value.shape == nodes_[b].value.shape))
    throw ConfigError("sub: shape mismatch " + nodes_[a].value.shape.str() + " vs " +
                      nodes_[b].value.shape.str());
  Node n;
  n.kind = OpKind::Sub;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = nodes_[a].value;
  const auto& bv = nodes_[b].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= bv.data[i];
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::mul(Id a, Id b) {
  if (!(nodes_[a].value.shape == nodes_[b].value.shape))
    throw ConfigError("mul: shape mismatch " + nodes_[a].value.shape.str() + " vs " +
                      nodes_[b].value.shape.str());
  Node n;
  n.kind = OpKind::Mul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = nodes_[a].value;
  const auto& bv = nodes_[b].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bv.data[i];
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::scale(Id x, double factor) {
  Node n;
  n.kind = OpKind::Scale;
  n.a = x;
  n.factor = factor;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = nodes_[x].value;
  for (auto& v : n.value.data) v = static_cast<T>(v * factor);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::concat_c(Id a, Id b) {
  const auto& as = nodes_[a].value.shape;
  const auto& bs = nodes_[b].value.shape;
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw ConfigError("concat_c: batch/spatial mismatch " + as.str() + " vs " + bs.str());
  Node n;
  n.kind = OpKind::ConcatC;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = TensorT<T>({as.n, as.c + bs.c, as.h, as.w});
  const auto& av = nodes_[a].value;
  const auto& bv = nodes_[b].value;
  const std::int64_t hw = std::int64_t(as.h) * as.w;
  for (int bt = 0; bt < as.n; ++bt) {
    std::copy_n(av.plane(bt, 0), std::int64_t(as.c) * hw, n.value.plane(bt, 0));
    std::copy_n(bv.plane(bt, 0), std::int64_t(bs.c) * hw, n.value.plane(bt, as.c));
  }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::slice_c(Id x, int from, int count) {
  const auto& xs = nodes_[x].value.shape;
  if (from < 0 || count <= 0 || from + count > xs.c)
    throw ConfigError("slice_c: channels [" + std::to_string(from) + ", " +
                      std::to_string(from + count) + ") out of range for " + xs.str());
  Node n;
  n.kind = OpKind::SliceC;
  n.a = x;
  n.from = from;
  n.count = count;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({xs.n, count, xs.h, xs.w});
  const auto& xv = nodes_[x].value;
  const std::int64_t hw = std::int64_t(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b)
    std::copy_n(xv.plane(b, from), std::int64_t(count) * hw, n.value.plane(b, 0));
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::image_gradient(Id x) {
  const auto& xs = nodes_[x].value.shape;
  Node n;
  n.kind = OpKind::ImageGradient;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({xs.n, 2 * xs.c, xs.h, xs.w});
  const auto& xv = nodes_[x].value;
  for (int b = 0; b < xs.n; ++b)
    for (int c = 0; c < xs.c; ++c) {
      const T* xp = xv.plane(b, c);
      T* gx = n.value.plane(b, c);
      T* gy = n.value.plane(b, xs.c + c);
      for (int y = 0; y < xs.h; ++y)
        for (int x2 = 0; x2 < xs.w; ++x2) {
          const std::int64_t i = std::int64_t(y) * xs.w + x2;
          gx[i] = (x2 + 1 < xs.w) ? xp[i + 1] - xp[i] : T(0);
          gy[i] = (y + 1 < xs.h) ? xp[i + xs.w] - xp[i] : T(0);
        }
    }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::reduce_sum(Id x) {
  Node n;
  n.kind = OpKind::ReduceSum;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({1, 1, 1, 1});
  T acc = T(0);
  for (const auto& v : nodes_[x].value.data) acc += v;
  n.value.data[0] = acc;
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::reduce_mean(Id x) {
  Node n;
  n.kind = OpKind::ReduceMean;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({1, 1, 1, 1});
  T acc = T(0);
  for (const auto& v : nodes_[x].value.data) acc += v;
  n.value.data[0] = acc / static_cast<T>(nodes_[x].value.size());
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::pick(Id x, int b, int c, int y, int x_pos) {
  const auto& xs = nodes_[x].value.shape;
  if (b < 0 || b >= xs.n || c < 0 || c >= xs.c || y < 0 || y >= xs.h || x_pos < 0 || x_pos >= xs.w)
    throw ConfigError("pick: index out of range for " + xs.str());
  Node n;
  n.kind = OpKind::Pick;
  n.a = x;
  n.ib = b;
  n.ic = c;
  n.iy = y;
  n.ix = x_pos;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = TensorT<T>({1, 1, 1, 1});
  n.value.data[0] = nodes_[x].value.at(b, c, y, x_pos);
  return push(std::move(n));
}

template <typename T>
void Tape<T>::ensure_grad(Id id) {
  if (nodes_[id].grad.size() == 0) nodes_[id].grad = TensorT<T>(nodes_[id].value.shape);
}

template <typename T>
void Tape<T>::backward(Id root) {
  auto& r = nodes_[root];
  if (r.value.size() != 1)
    throw ConfigError("backward: root must be a 1x1x1x1 scalar, got " + r.value.shape.str());
  ensure_grad(root);
  r.grad.data[0] += T(1);
  for (Id i = root; i >= 0; --i) {
    if (nodes_[i].grad.size() == 0 || nodes_[i].kind == OpKind::Leaf) continue;
    backprop_node(i);
  }
}

template <typename T>
void Tape<T>::backprop_node(Id id) {
  Node& n = nodes_[id];
  const TensorT<T>& g = n.grad;
  auto want = [&](Id in) { return in >= 0 && nodes_[in].requires_grad; };
  switch (n.kind) {
    case OpKind::Conv2d: {
      const bool dx = want(n.a), dw = want(n.b), db = want(n.c);
      if (dx) ensure_grad(n.a);
      if (dw) ensure_grad(n.b);
      if (db) ensure_grad(n.c);
      if (dx || dw || db)
        detail::conv2d_backward(nodes_[n.a].value, nodes_[n.b].value, g, n.stride, n.pad,
                                dx ? &nodes_[n.a].grad : nullptr, dw ? &nodes_[n.b].grad : nullptr,
                                db ? nodes_[n.c].grad.data.data() : nullptr);
      break;
    }
    case OpKind::TConv2d: {
      const bool dx = want(n.a), dw = want(n.b), db = want(n.c);
      if (dx) ensure_grad(n.a);
      if (dw) ensure_grad(n.b);
      if (db) ensure_grad(n.c);
      if (dx || dw || db)
        detail::tconv2d_backward(nodes_[n.a].value, nodes_[n.b].value, g,
                                 dx ? &nodes_[n.a].grad : nullptr, dw ? &nodes_[n.b].grad : nullptr,
                                 db ? nodes_[n.c].grad.data.data() : nullptr);
      break;
    }
    case OpKind::MaxPool2: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gx = nodes_[n.a].grad;
      for (std::size_t o = 0; o < n.argmax.size(); ++o) gx.data[n.argmax[o]] += g.data[o];
      break;
    }
    case OpKind::AvgPool2: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gx = nodes_[n.a].grad;
      const auto& xs = nodes_[n.a].value.shape;
      std::int64_t o = 0;
      for (int b = 0; b < xs.n; ++b)
        for (int c = 0; c < xs.c; ++c) {
          T* gp = gx.plane(b, c);
          for (int oy = 0; oy < xs.h / 2; ++oy)
            for (int ox = 0; ox < xs.w / 2; ++ox, ++o) {
              const T v = g.data[o] * T(0.25);
              const std::int64_t i0 = std::int64_t(2 * oy) * xs.w + 2 * ox;
              gp[i0] += v;
              gp[i0 + 1] += v;
              gp[i0 + xs.w] += v;
              gp[i0 + xs.w + 1] += v;
            }
        }
      break;
    }
    case OpKind::PRelu: {
      const bool dx = want(n.a), da = want(n.b);
      const auto& xv = nodes_[n.a].value;
      const auto& sv = nodes_[n.b].value;
      const auto& xs = xv.shape;
      const std::int64_t hw = std::int64_t(xs.h) * xs.w;
      if (dx) {
        ensure_grad(n.a);
        auto& gx = nodes_[n.a].grad;
        for (int b = 0; b < xs.n; ++b)
          for (int c = 0; c < xs.c; ++c) {
            const T a = sv.data[c];
            const T* xp = xv.plane(b, c);
            const T* gp = g.plane(b, c);
            T* dst = gx.plane(b, c);
            for (std::int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * (xp[i] >= T(0) ? T(1) : a);
          }
      }
      if (da) {
        ensure_grad(n.b);
        auto& ga = nodes_[n.b].grad;
        for (int b = 0; b < xs.n; ++b)
          for (int c = 0; c < xs.c; ++c) {
            const T* xp = xv.plane(b, c);
            const T* gp = g.plane(b, c);
            T acc = T(0);
            for (std::int64_t i = 0; i < hw; ++i)
              if (xp[i] < T(0)) acc += gp[i] * xp[i];
            ga.data[c] += acc;
          }
      }
      break;
    }
    case OpKind::Add: {
      for (Id in : {n.a, n.b}) {
        if (!want(in)) continue;
        ensure_grad(in);
        auto& gi = nodes_[in].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
      }
      break;
    }
    case OpKind::Sub: {
      if (want(n.a)) {
        ensure_grad(n.a);
        auto& gi = nodes_[n.a].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
      }
      if (want(n.b)) {
        ensure_grad(n.b);
        auto& gi = nodes_[n.b].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] -= g.data[i];
      }
      break;
    }
    case OpKind::Mul: {
      if (want(n.a)) {
        ensure_grad(n.a);
        auto& gi = nodes_[n.a].grad;
        const auto& bv = nodes_[n.b].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i] * bv.data[i];
      }
      if (want(n.b)) {
        ensure_grad(n.b);
        auto& gi = nodes_[n.b].grad;
        const auto& av = nodes_[n.a].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i] * av.data[i];
      }
      break;
    }
    case OpKind::Scale: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gi = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        gi.data[i] += static_cast<T>(g.data[i] * n.factor);
      break;
    }
    case OpKind::ConcatC: {
      const auto& as = nodes_[n.a].value.shape;
      const auto& bs = nodes_[n.b].value.shape;
      const std::int64_t hw = std::int64_t(as.h) * as.w;
      if (want(n.a)) {
        ensure_grad(n.a);
        auto& gi = nodes_[n.a].grad;
        for (int b = 0; b < as.n; ++b) {
          const T* src = g.plane(b, 0);
          T* dst = gi.plane(b, 0);
          for (std::int64_t i = 0; i < std::int64_t(as.c) * hw; ++i) dst[i] += src[i];
        }
      }
      if (want(n.b)) {
        ensure_grad(n.b);
        auto& gi = nodes_[n.b].grad;
        for (int b = 0; b < as.n; ++b) {
          const T* src = g.plane(b, as.c);
          T* dst = gi.plane(b, 0);
          for (std::int64_t i = 0; i < std::int64_t(bs.c) * hw; ++i) dst[i] += src[i];
        }
      }
      break;
    }
    case OpKind::SliceC: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gi = nodes_[n.a].grad;
      const auto& xs = nodes_[n.a].value.shape;
      const std::int64_t hw = std::int64_t(xs.h) * xs.w;
      for (int b = 0; b < xs.n; ++b) {
        const T* src = g.plane(b, 0);
        T* dst = gi.plane(b, n.from);
        for (std::int64_t i = 0; i < std::int64_t(n.count) * hw; ++i) dst[i] += src[i];
      }
      break;
    }
    case OpKind::ImageGradient: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gi = nodes_[n.a].grad;
      const auto& xs = nodes_[n.a].value.shape;
      for (int b = 0; b < xs.n; ++b)
        for (int c = 0; c < xs.c; ++c) {
          const T* ggx = g.plane(b, c);
          const T* ggy = g.plane(b, xs.c + c);
          T* dst = gi.plane(b, c);
          for (int y = 0; y < xs.h; ++y)
            for (int x2 = 0; x2 < xs.w; ++x2) {
              const std::int64_t i = std::int64_t(y) * xs.w + x2;
              if (x2 + 1 < xs.w) {
                dst[i + 1] += ggx[i];
                dst[i] -= ggx[i];
              }
              if (y + 1 < xs.h) {
                dst[i + xs.w] += ggy[i];
                dst[i] -= ggy[i];
              }
            }
        }
      break;
    }
    case OpKind::ReduceSum: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gi = nodes_[n.a].grad;
      const T gv = g.data[0];
      for (auto& v : gi.data) v += gv;
      break;
    }
    case OpKind::ReduceMean: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      auto& gi = nodes_[n.a].grad;
      const T gv = g.data[0] / static_cast<T>(nodes_[n.a].value.size());
      for (auto& v : gi.data) v += gv;
      break;
    }
    case OpKind::Pick: {
      if (!want(n.a)) break;
      ensure_grad(n.a);
      nodes_[n.a].grad.at(n.ib, n.ic, n.iy, n.ix) += g.data[0];
      break;
    }
    case OpKind::Leaf:
      break;
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cnp
