#include "cnp/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace cnp {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

struct Interval {
  std::int64_t lo = 0, hi = 0;
  bool empty = true;
  void merge(std::int64_t l, std::int64_t h) {
    if (empty) {
      lo = l;
      hi = h;
      empty = false;
    } else {
      lo = std::min(lo, l);
      hi = std::max(hi, h);
    }
  }
};

// Index interval on a layer's input grid that can influence the given
// interval of its output grid (one axis; kernels are square).
Interval map_through(const LayerNode& n, const Interval& out) {
  Interval in;
  switch (n.kind) {
    case LayerKind::Conv:
      in.merge(std::int64_t(n.stride) * out.lo - n.pad,
               std::int64_t(n.stride) * out.hi - n.pad + n.kernel - 1);
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      in.merge(2 * out.lo, 2 * out.hi + 1);
      break;
    case LayerKind::TConv:
      // out = 2*in + k - 1 - pad, k in 0..2 => in = (out + 1 - k)/2
      in.merge(ceil_div(out.lo - 1, 2), floor_div(out.hi + 1, 2));
      break;
    default:
      in.merge(out.lo, out.hi);
      break;
  }
  return in;
}

// Support interval of the network input influencing output index 0 of
// `root`, via every path of the DAG.
Interval input_support(const ModelGraph& g, int root) {
  std::vector<Interval> iv(g.layers.size());
  Interval input_iv;
  iv[root].merge(0, 0);
  for (int i = root; i >= 0; --i) {
    if (iv[i].empty) continue;
    const LayerNode& n = g.layers[i];
    const Interval mapped = map_through(n, iv[i]);
    for (int in : n.inputs) {
      if (in < 0)
        input_iv.merge(mapped.lo, mapped.hi);
      else
        iv[in].merge(mapped.lo, mapped.hi);
    }
  }
  return input_iv;
}

}  // namespace

RfState analytic_rf(const ModelGraph& graph) {
  RfState st;
  std::vector<int> jump(graph.layers.size(), 1);
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerNode& n = graph.layers[i];
    int j = 1;
    for (int in : n.inputs) {
      const int base = in < 0 ? 1 : jump[in];
      j = std::max(j, base);
    }
    switch (n.kind) {
      case LayerKind::Conv:
        j *= n.stride;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        j *= 2;
        break;
      case LayerKind::TConv:
        j = std::max(1, j / 2);
        break;
      default:
        break;
    }
    jump[i] = j;
    const Interval s = input_support(graph, static_cast<int>(i));
    RfTraceEntry e;
    e.layer = n.name;
    e.rf = static_cast<int>(s.hi - s.lo + 1);
    e.jump = j;
    st.trace.push_back(std::move(e));
  }
  const Interval out = input_support(graph, graph.output_layer);
  st.rf = static_cast<int>(out.hi - out.lo + 1);
  st.jump = jump[graph.output_layer];
  return st;
}

int empirical_rf_min_input(const ModelGraph& graph) {
  const Interval s = input_support(graph, graph.output_layer);
  // Probe centers sit at H/2; alignment to the full pooling grid keeps the
  // measured phase identical to the virtual index-0 composition.
  const int align = 1 << graph.levels();
  std::int64_t need = std::max(-2 * s.lo, 2 * (s.hi + 1));
  need = std::max<std::int64_t>(need, align);
  return static_cast<int>(ceil_div(need, align) * align);
}

int empirical_rf(const ModelGraph& graph, int input_size) {
  const int min_size = empirical_rf_min_input(graph);
  if (input_size < min_size || input_size % (1 << graph.levels()) != 0)
    throw ConfigError("empirical_rf: input size " + std::to_string(input_size) +
                      " too small or misaligned; need a multiple of " +
                      std::to_string(1 << graph.levels()) + " of at least " +
                      std::to_string(min_size));

  std::mt19937 rng(12345);
  TensorD input =
      rand_uniform<double>({1, graph.config.input_channels, input_size, input_size}, rng, 0.25, 1.0);

  Tape<double> tape;
  auto input_id = tape.leaf(std::move(input), true);
  ForwardOptions opt;
  opt.avgpool_probe = true;
  auto param_ids = graph.bind_params<double>(tape, false, /*abs_values=*/true);
  auto out = graph.emit<double>(tape, input_id, param_ids, opt);
  auto probe = tape.pick(out, 0, 0, input_size / 2, input_size / 2);
  tape.backward(probe);

  const TensorD& g = tape.grad(input_id);
  int y0 = input_size, y1 = -1, x0 = input_size, x1 = -1;
  for (int c = 0; c < g.shape.c; ++c)
    for (int y = 0; y < input_size; ++y)
      for (int x = 0; x < input_size; ++x)
        if (g.at(0, c, y, x) != 0.0) {
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
  if (y1 < 0) return 0;
  return std::max(y1 - y0 + 1, x1 - x0 + 1);
}

CostReport cost_report(const ModelGraph& graph, int input_h, int input_w) {
  graph.check_input({1, graph.config.input_channels, input_h, input_w});
  CostReport rep;
  rep.per_level.resize(static_cast<std::size_t>(graph.levels()));

  std::vector<int> dim_h(graph.layers.size()), dim_w(graph.layers.size());
  auto in_h = [&](int idx) { return idx < 0 ? input_h : dim_h[idx]; };
  auto in_w = [&](int idx) { return idx < 0 ? input_w : dim_w[idx]; };

  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerNode& n = graph.layers[i];
    const int ih = in_h(n.inputs[0]), iw = in_w(n.inputs[0]);
    std::int64_t macs = 0;
    switch (n.kind) {
      case LayerKind::Conv: {
        dim_h[i] = (ih + 2 * n.pad - n.kernel) / n.stride + 1;
        dim_w[i] = (iw + 2 * n.pad - n.kernel) / n.stride + 1;
        macs = std::int64_t(n.out_channels) * dim_h[i] * dim_w[i] * n.in_channels * n.kernel *
               n.kernel;
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        dim_h[i] = ih / 2;
        dim_w[i] = iw / 2;
        macs = std::int64_t(n.out_channels) * dim_h[i] * dim_w[i];
        break;
      case LayerKind::TConv:
        dim_h[i] = ih * 2;
        dim_w[i] = iw * 2;
        macs = std::int64_t(n.out_channels) * dim_h[i] * dim_w[i];
        break;
      default:
        dim_h[i] = ih;
        dim_w[i] = iw;
        macs = std::int64_t(n.out_channels) * dim_h[i] * dim_w[i];
        break;
    }
    auto& lv = rep.per_level[static_cast<std::size_t>(n.level)];
    lv.macs += macs;
    if (n.is_extraction) lv.extraction_macs += macs;
    if (n.weight >= 0) lv.params += graph.params[n.weight].value.size();
    if (n.bias >= 0) lv.params += graph.params[n.bias].value.size();
    if (n.slope >= 0) lv.params += graph.params[n.slope].value.size();
    lv.activation_elems += std::int64_t(n.out_channels) * dim_h[i] * dim_w[i];
  }

  for (const auto& lv : rep.per_level) {
    rep.total_macs += lv.macs;
    rep.total_params += lv.params;
    rep.total_activation_elems += lv.activation_elems;
  }

  // Straight-line liveness over build order.
  std::vector<int> refs(graph.layers.size(), 0);
  int input_refs = 0;
  for (const auto& n : graph.layers)
    for (int in : n.inputs) {
      if (in < 0)
        ++input_refs;
      else
        ++refs[in];
    }
  ++refs[graph.output_layer];
  auto size_of = [&](int idx) {
    if (idx < 0) return std::int64_t(graph.config.input_channels) * input_h * input_w;
    return std::int64_t(graph.layers[idx].out_channels) * dim_h[idx] * dim_w[idx];
  };
  std::int64_t live = size_of(-1);
  rep.peak_activation_elems = live;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    live += size_of(static_cast<int>(i));
    rep.peak_activation_elems = std::max(rep.peak_activation_elems, live);
    for (int in : graph.layers[i].inputs) {
      if (in < 0) {
        if (--input_refs == 0) live -= size_of(-1);
      } else {
        if (--refs[in] == 0) live -= size_of(in);
      }
    }
  }

  rep.receptive_field = analytic_rf(graph).rf;
  return rep;
}

}  // namespace cnp
