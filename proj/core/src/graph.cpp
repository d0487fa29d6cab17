#include "cnp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace cnp {

void CnpConfig::validate() const {
  if (levels < 1) throw ConfigError("config: levels must be >= 1, got " + std::to_string(levels));
  if (transform_layers < 1 || transform_layers > 3)
    throw ConfigError("config: transform_layers must be in 1..3, got " +
                      std::to_string(transform_layers));
  if (!(feature_channels > embed_channels && embed_channels > 0))
    throw ConfigError("config: need feature_channels > embed_channels > 0, got F=" +
                      std::to_string(feature_channels) + " E=" + std::to_string(embed_channels));
  if (input_channels < 1 || output_channels < 1)
    throw ConfigError("config: channel counts must be positive");
  if (residual) {
    if (residual_channel < 0 || residual_channel >= input_channels)
      throw ConfigError("config: residual_channel " + std::to_string(residual_channel) +
                        " out of range for " + std::to_string(input_channels) + " input channels");
    if (residual_channel + output_channels > input_channels)
      throw ConfigError("config: residual channels [" + std::to_string(residual_channel) + ", " +
                        std::to_string(residual_channel + output_channels) +
                        ") exceed input channels");
  }
}

namespace {

// Incremental DAG construction with stable layer/parameter names.
class Builder {
 public:
  explicit Builder(BuilderKind kind) { g.builder = kind; }

  int add_param(const std::string& name, Shape s) {
    g.params.emplace_back(name, Tensor(s));
    return static_cast<int>(g.params.size() - 1);
  }

  int conv(const std::string& name, int input, int in_c, int out_c, int k, int stride, int pad,
           int level, int scale, bool extraction = false, bool output_conv = false) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::Conv;
    n.inputs = {input};
    n.kernel = k;
    n.stride = stride;
    n.pad = pad;
    n.in_channels = in_c;
    n.out_channels = out_c;
    n.level = level;
    n.scale = scale;
    n.is_extraction = extraction;
    n.is_output_conv = output_conv;
    n.weight = add_param(name + ".weight", {out_c, in_c, k, k});
    n.bias = add_param(name + ".bias", {1, out_c, 1, 1});
    return push(std::move(n));
  }

  int prelu(const std::string& name, int input, int channels, int level, int scale) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::PRelu;
    n.inputs = {input};
    n.in_channels = channels;
    n.out_channels = channels;
    n.level = level;
    n.scale = scale;
    n.slope = add_param(name + ".slope", {1, channels, 1, 1});
    return push(std::move(n));
  }

  int pool(const std::string& name, int input, int channels, int level, int scale, bool avg) {
    LayerNode n;
    n.name = name;
    n.kind = avg ? LayerKind::AvgPool : LayerKind::MaxPool;
    n.inputs = {input};
    n.kernel = 2;
    n.stride = 2;
    n.in_channels = channels;
    n.out_channels = channels;
    n.level = level;
    n.scale = scale;
    return push(std::move(n));
  }

  int tconv(const std::string& name, int input, int in_c, int out_c, int level, int source_level,
            int scale) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::TConv;
    n.inputs = {input};
    n.kernel = 3;
    n.stride = 2;
    n.pad = 1;
    n.in_channels = in_c;
    n.out_channels = out_c;
    n.level = level;
    n.source_level = source_level;
    n.scale = scale;
    n.weight = add_param(name + ".weight", {in_c, out_c, 3, 3});
    n.bias = add_param(name + ".bias", {1, out_c, 1, 1});
    return push(std::move(n));
  }

  int fuse(const std::string& name, int a, int b, int channels_a, int channels_b, FusionMode mode,
           int level, int scale) {
    LayerNode n;
    n.name = name;
    n.kind = mode == FusionMode::Sum ? LayerKind::FuseSum : LayerKind::FuseConcat;
    n.inputs = {a, b};
    n.in_channels = channels_a;
    n.out_channels = mode == FusionMode::Sum ? channels_a : channels_a + channels_b;
    n.level = level;
    n.scale = scale;
    return push(std::move(n));
  }

  int residual_add(const std::string& name, int pred, int from, int count, int channels) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::ResidualAdd;
    n.inputs = {pred, -1};
    n.in_channels = channels;
    n.out_channels = channels;
    n.residual_from = from;
    n.residual_count = count;
    return push(std::move(n));
  }

  ModelGraph take(int output_layer) {
    g.output_layer = output_layer;
    return std::move(g);
  }

  ModelGraph g;

 private:
  int push(LayerNode n) {
    g.layers.push_back(std::move(n));
    return static_cast<int>(g.layers.size() - 1);
  }
};

// Two 3x3 conv + PReLU stages.
int extraction_module(Builder& b, const std::string& prefix, int input, int in_c, int out_c,
                      int level, int scale) {
  int id = b.conv(prefix + ".conv0", input, in_c, out_c, 3, 1, 1, level, scale, true);
  id = b.prelu(prefix + ".prelu0", id, out_c, level, scale);
  id = b.conv(prefix + ".conv1", id, out_c, out_c, 3, 1, 1, level, scale, true);
  id = b.prelu(prefix + ".prelu1", id, out_c, level, scale);
  return id;
}

// shrink 1x1 -> S x (3x3 conv + PReLU) -> expand 1x1
int mapping_module(Builder& b, const std::string& prefix, int input, int f, int e, int s,
                   int level, int scale) {
  int id = b.conv(prefix + ".shrink", input, f, e, 1, 1, 0, level, scale);
  for (int t = 0; t < s; ++t) {
    id = b.conv(prefix + ".transform" + std::to_string(t), id, e, e, 3, 1, 1, level, scale);
    id = b.prelu(prefix + ".transform" + std::to_string(t) + ".prelu", id, e, level, scale);
  }
  id = b.conv(prefix + ".expand", id, e, f, 1, 1, 0, level, scale);
  return id;
}

// PReLU -> 3x3 conv(F) -> PReLU -> 3x3 conv(outC)
int adjustment_head(Builder& b, int input, int f, int out_c) {
  int id = b.prelu("adjust.prelu0", input, f, 0, 0);
  id = b.conv("adjust.conv0", id, f, f, 3, 1, 1, 0, 0);
  id = b.prelu("adjust.prelu1", id, f, 0, 0);
  id = b.conv("adjust.conv1", id, f, out_c, 3, 1, 1, 0, 0, false, true);
  return id;
}

std::int64_t conv_params(int in_c, int out_c, int k) {
  return std::int64_t(out_c) * in_c * k * k + out_c;
}

// Closed-form parameter count of the simple-multiscale baseline at branch
// width f/e (used to match the CNP budget before building).
std::int64_t smf_param_count(const CnpConfig& c, int f, int e) {
  std::int64_t total = 0;
  for (int i = 0; i < c.levels; ++i) {
    total += conv_params(c.input_channels, f, 3) + conv_params(f, f, 3) + 2 * f;  // extraction
    total += conv_params(f, e, 1) + conv_params(e, f, 1);                          // shrink/expand
    total += c.transform_layers * (conv_params(e, e, 3) + e);                      // transforms
    total += std::int64_t(i) * (std::int64_t(f) * f * 9 + f);                      // upsample chain
  }
  total += conv_params(f, f, 3) + conv_params(f, c.output_channels, 3) + 2 * f;    // adjustment
  return total;
}

}  // namespace

ModelGraph build_cnp(const CnpConfig& config) {
  config.validate();
  const int L = config.levels, S = config.transform_layers;
  const int F = config.feature_channels, E = config.embed_channels;

  Builder b(BuilderKind::Cnp);
  b.g.config = config;

  // Descent: extract, downsample, extract deeper. Level i's path runs through
  // 2*(i+1) extraction convs in total.
  std::vector<int> feat(L);
  int prev = -1;
  int prev_c = config.input_channels;
  for (int i = 0; i < L; ++i) {
    const std::string lp = "l" + std::to_string(i);
    if (i > 0) {
      if (config.downsample == DownsampleMode::MaxPool) {
        prev = b.pool(lp + ".down", prev, prev_c, i, i, false);
      } else {
        prev = b.conv(lp + ".down", prev, prev_c, F, 3, 2, 1, i, i);
        prev_c = F;
      }
    }
    prev = extraction_module(b, lp + ".extract", prev, prev_c, F, i, i);
    prev_c = F;
    feat[i] = prev;
  }

  // Per-level mapping runs as a side branch off the extraction output.
  std::vector<int> mapped(L);
  for (int i = 0; i < L; ++i)
    mapped[i] = mapping_module(b, "l" + std::to_string(i) + ".map", feat[i], F, E, S, i, i);

  // Progressive ascent: upsample the deeper result, fuse with this level.
  int recon = mapped[L - 1];
  for (int i = L - 2; i >= 0; --i) {
    const std::string rp = "recon.l" + std::to_string(i);
    int up = b.tconv("recon.l" + std::to_string(i + 1) + ".up", recon, F, F, i, i + 1, i);
    if (config.fusion == FusionMode::Sum) {
      recon = b.fuse(rp + ".fuse", mapped[i], up, F, F, FusionMode::Sum, i, i);
    } else {
      int cat = b.fuse(rp + ".cat", mapped[i], up, F, F, FusionMode::Concat, i, i);
      recon = b.conv(rp + ".proj", cat, 2 * F, F, 1, 1, 0, i, i);
    }
  }

  int out = adjustment_head(b, recon, F, config.output_channels);
  if (config.residual)
    out = b.residual_add("residual", out, config.residual_channel, config.output_channels,
                         config.output_channels);
  return b.take(out);
}

ModelGraph build_single_level(int layers, int feature_channels, int input_channels,
                              int output_channels) {
  if (layers < 2)
    throw ConfigError("build_single_level: need at least 2 layers, got " + std::to_string(layers));
  Builder b(BuilderKind::SingleLevel);
  b.g.single_level_layers = layers;
  CnpConfig c;
  c.levels = 1;
  c.feature_channels = feature_channels;
  c.embed_channels = std::max(1, feature_channels / 4);
  c.input_channels = input_channels;
  c.output_channels = output_channels;
  c.residual = false;
  b.g.config = c;

  int prev = -1;
  int prev_c = input_channels;
  for (int j = 0; j < layers - 1; ++j) {
    const std::string lp = "stack" + std::to_string(j);
    prev = b.conv(lp + ".conv", prev, prev_c, feature_channels, 3, 1, 1, 0, 0, true);
    prev = b.prelu(lp + ".prelu", prev, feature_channels, 0, 0);
    prev_c = feature_channels;
  }
  int out = b.conv("out.conv", prev, feature_channels, output_channels, 1, 1, 0, 0, 0, false, true);
  return b.take(out);
}

ModelGraph build_simple_multiscale(const CnpConfig& config) {
  config.validate();
  const int L = config.levels, S = config.transform_layers;

  // Match the CNP parameter budget by adjusting branch width: the chained
  // per-branch upsamplers otherwise cost more than the pyramid's shared
  // ascent (and less for shallow configs).
  std::int64_t target = 0;
  {
    ModelGraph ref = build_cnp(config);
    target = ref.param_count();
  }
  int best_f = config.feature_channels;
  int best_e = config.embed_channels;
  std::int64_t best_diff = -1;
  for (int f = 2; f <= 2 * config.feature_channels + 8; ++f) {
    int e = std::max(1, (f * config.embed_channels) / config.feature_channels);
    if (e >= f) e = f - 1;
    if (e < 1) continue;
    const std::int64_t diff = std::llabs(smf_param_count(config, f, e) - target);
    if (best_diff < 0 || diff < best_diff) {
      best_diff = diff;
      best_f = f;
      best_e = e;
    }
  }
  const int F = best_f, E = best_e;

  Builder b(BuilderKind::SimpleMultiscale);
  b.g.config = config;

  // Input pyramid: plain 2x average-pool chain of the raw input.
  std::vector<int> scaled(L);
  scaled[0] = -1;
  int prev = -1;
  for (int i = 1; i < L; ++i) {
    prev = b.pool("pyr" + std::to_string(i) + ".down", prev, config.input_channels, i, i, true);
    scaled[i] = prev;
  }

  // Identical fixed-depth branches; no cross-scale feature flow.
  std::vector<int> branch(L);
  for (int i = 0; i < L; ++i) {
    const std::string bp = "branch" + std::to_string(i);
    int id = extraction_module(b, bp + ".extract", scaled[i], config.input_channels, F, i, i);
    id = mapping_module(b, bp + ".map", id, F, E, S, i, i);
    for (int j = i; j > 0; --j)
      id = b.tconv(bp + ".up" + std::to_string(j), id, F, F, j - 1, i, j - 1);
    branch[i] = id;
  }

  int sum = branch[0];
  for (int i = 1; i < L; ++i)
    sum = b.fuse("sum" + std::to_string(i), sum, branch[i], F, F, FusionMode::Sum, 0, 0);

  int out = adjustment_head(b, sum, F, config.output_channels);
  if (config.residual)
    out = b.residual_add("residual", out, config.residual_channel, config.output_channels,
                         config.output_channels);
  return b.take(out);
}

std::int64_t ModelGraph::param_count() const {
  std::int64_t total = 0;
  for (const auto& p : params) total += p.value.size();
  return total;
}

std::int64_t param_count(const ModelGraph& graph) { return graph.param_count(); }

const Parameter* ModelGraph::find_param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void ModelGraph::zero_grads() {
  for (auto& p : params) p.zero_grad();
}

void ModelGraph::check_input(const Shape& s) const {
  if (s.c != config.input_channels)
    throw ConfigError("forward: input has " + std::to_string(s.c) + " channels, model expects " +
                      std::to_string(config.input_channels));
  const int m = divisibility();
  if (s.h % m != 0 || s.w % m != 0)
    throw ConfigError("forward: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " must be divisible by " + std::to_string(m) +
                      "; reflect-pad the input first (see pad_reflect)");
}

template <typename T>
std::vector<typename Tape<T>::Id> ModelGraph::bind_params(Tape<T>& tape, bool requires_grad,
                                                          bool abs_values) const {
  std::vector<typename Tape<T>::Id> ids;
  ids.reserve(params.size());
  for (const auto& p : params) {
    TensorT<T> v = p.value.template cast<T>();
    if (abs_values) {
      // Strictly positive weights so the gradient-support probe cannot
      // cancel to exact zero anywhere inside the architectural field.
      for (auto& x : v.data) x = std::max(std::abs(x), T(1e-3));
    }
    ids.push_back(tape.leaf(std::move(v), requires_grad));
  }
  return ids;
}

template <typename T>
typename Tape<T>::Id ModelGraph::emit(Tape<T>& tape, typename Tape<T>::Id input,
                                      const std::vector<typename Tape<T>::Id>& param_ids,
                                      const ForwardOptions& opt) const {
  std::vector<typename Tape<T>::Id> out(layers.size(), -1);
  auto in_id = [&](int idx) { return idx < 0 ? input : out[idx]; };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerNode& n = layers[i];
    switch (n.kind) {
      case LayerKind::Conv:
        out[i] = tape.conv2d(in_id(n.inputs[0]), param_ids[n.weight], param_ids[n.bias], n.stride,
                             n.pad);
        break;
      case LayerKind::TConv: {
        if (opt.max_active_level >= 0 && n.source_level > opt.max_active_level) {
          const auto& s = tape.value(in_id(n.inputs[0])).shape;
          out[i] = tape.leaf(TensorT<T>({s.n, n.out_channels, s.h * 2, s.w * 2}), false);
        } else {
          out[i] = tape.transposed_conv2d(in_id(n.inputs[0]), param_ids[n.weight],
                                          param_ids[n.bias]);
        }
        break;
      }
      case LayerKind::MaxPool:
        out[i] = opt.avgpool_probe ? tape.avgpool2(in_id(n.inputs[0]))
                                   : tape.maxpool2(in_id(n.inputs[0]));
        break;
      case LayerKind::AvgPool:
        out[i] = tape.avgpool2(in_id(n.inputs[0]));
        break;
      case LayerKind::PRelu:
        out[i] = tape.prelu(in_id(n.inputs[0]), param_ids[n.slope]);
        break;
      case LayerKind::FuseSum:
        out[i] = tape.add(in_id(n.inputs[0]), in_id(n.inputs[1]));
        break;
      case LayerKind::FuseConcat:
        out[i] = tape.concat_c(in_id(n.inputs[0]), in_id(n.inputs[1]));
        break;
      case LayerKind::ResidualAdd:
        out[i] = tape.add(in_id(n.inputs[0]),
                          tape.slice_c(input, n.residual_from, n.residual_count));
        break;
    }
  }
  return out[output_layer];
}

Tensor ModelGraph::forward(const Tensor& input, const ForwardOptions& opt) const {
  check_input(input.shape);
  Tape<float> tape;
  auto ids = bind_params<float>(tape, false);
  auto in = tape.leaf(input, false);
  auto out = emit<float>(tape, in, ids, opt);
  return tape.value(out);
}

void init_transposed_conv_bilinear(Tensor& weight, double noise_std, std::mt19937& rng) {
  const auto& s = weight.shape;
  if (s.h != 3 || s.w != 3)
    throw ConfigError("bilinear init expects a 3x3 kernel, got " + s.str());
  // out[2q] = in[q], out[2q+1] = (in[q] + in[q+1]) / 2 under the stride-2
  // scatter: taps (0.5, 1, 0.5) per axis on the diagonal channel pairs.
  static const double taps[3] = {0.5, 1.0, 0.5};
  std::normal_distribution<double> noise(0.0, noise_std);
  for (int i = 0; i < s.n; ++i)
    for (int o = 0; o < s.c; ++o)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double v = (i == o) ? taps[ky] * taps[kx] : 0.0;
          if (noise_std > 0.0) v += noise(rng);
          weight.at(i, o, ky, kx) = static_cast<float>(v);
        }
}

void init_params(ModelGraph& graph, unsigned seed) {
  std::mt19937 rng(seed);
  for (const auto& layer : graph.layers) {
    switch (layer.kind) {
      case LayerKind::Conv: {
        auto& w = graph.params[layer.weight].value;
        const double fan_in = double(w.shape.c) * w.shape.h * w.shape.w;
        const double stddev = layer.is_output_conv ? 1e-3 : std::sqrt(2.0 / fan_in);
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& v : w.data) v = static_cast<float>(dist(rng));
        graph.params[layer.bias].value.fill(0.0f);
        break;
      }
      case LayerKind::TConv: {
        init_transposed_conv_bilinear(graph.params[layer.weight].value, 0.01, rng);
        graph.params[layer.bias].value.fill(0.0f);
        break;
      }
      case LayerKind::PRelu:
        graph.params[layer.slope].value.fill(0.25f);
        break;
      default:
        break;
    }
  }
  graph.zero_grads();
}

template std::vector<Tape<float>::Id> ModelGraph::bind_params<float>(Tape<float>&, bool,
                                                                     bool) const;
template std::vector<Tape<double>::Id> ModelGraph::bind_params<double>(Tape<double>&, bool,
                                                                       bool) const;
template Tape<float>::Id ModelGraph::emit<float>(Tape<float>&, Tape<float>::Id,
                                                 const std::vector<Tape<float>::Id>&,
                                                 const ForwardOptions&) const;
template Tape<double>::Id ModelGraph::emit<double>(Tape<double>&, Tape<double>::Id,
                                                   const std::vector<Tape<double>::Id>&,
                                                   const ForwardOptions&) const;

}  // namespace cnp
