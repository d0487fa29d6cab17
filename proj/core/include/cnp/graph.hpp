#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnp/tape.hpp"
#include "cnp/tensor.hpp"

namespace cnp {

enum class FusionMode { Sum, Concat };
enum class DownsampleMode { MaxPool, StridedConv };

/// Architecture hyperparameters of the pyramid.
struct CnpConfig {
  int levels = 5;            // total pyramid levels, level 0 is full resolution
  int transform_layers = 1;  // S, nonlinear 3x3 transforms inside each mapping
  int feature_channels = 56; // F
  int embed_channels = 12;   // E, mapping works in this low-dimensional space
  int input_channels = 3;
  int output_channels = 1;
  FusionMode fusion = FusionMode::Sum;
  DownsampleMode downsample = DownsampleMode::MaxPool;
  bool residual = true;
  int residual_channel = 1;  // input channel the prediction is added to

  void validate() const;
};

enum class LayerKind { Conv, TConv, MaxPool, AvgPool, PRelu, FuseSum, FuseConcat, ResidualAdd };
enum class BuilderKind : std::uint8_t { Cnp = 0, SingleLevel = 1, SimpleMultiscale = 2 };

/// One node of the built computation DAG. Carries enough geometry metadata
/// (kernel, stride, pad, resolution scale) for the analysis module.
struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::vector<int> inputs;  // layer indices; -1 refers to the network input
  int kernel = 0, stride = 1, pad = 0;
  int in_channels = 0, out_channels = 0;
  int weight = -1, bias = -1, slope = -1;  // indices into ModelGraph::params
  int level = 0;           // pyramid level for cost attribution
  int source_level = -1;   // TConv only: level whose contribution it carries up
  int scale = 0;           // output resolution is input / 2^scale
  bool is_extraction = false;
  bool is_output_conv = false;  // final conv producing the prediction
  int residual_from = 0, residual_count = 0;  // ResidualAdd only
};

struct ForwardOptions {
  /// Levels above this index contribute zeros to reconstruction (<0: all
  /// levels active). Level 0 is always active.
  int max_active_level = -1;
  /// Replace max pooling by average pooling (receptive-field probe).
  bool avgpool_probe = false;
};

/// A built model: ordered layer DAG plus named parameters. Immutable after
/// build except for parameter values; concurrent read-only forwards are safe,
/// training mutation is single-writer.
class ModelGraph {
 public:
  BuilderKind builder = BuilderKind::Cnp;
  CnpConfig config;
  int single_level_layers = 0;  // SingleLevel builder argument
  std::vector<Parameter> params;
  std::vector<LayerNode> layers;
  int output_layer = -1;

  int levels() const { return builder == BuilderKind::SingleLevel ? 1 : config.levels; }
  /// Input spatial dims must be divisible by this (2^(levels-1)).
  int divisibility() const { return 1 << (levels() - 1); }
  std::int64_t param_count() const;
  const Parameter* find_param(const std::string& name) const;
  void zero_grads();

  /// Creates one leaf per parameter, in parameter order.
  template <typename T>
  std::vector<typename Tape<T>::Id> bind_params(Tape<T>& tape, bool requires_grad,
                                                bool abs_values = false) const;

  /// Replays the layer DAG onto a tape. `param_ids` must come from
  /// bind_params (same order).
  template <typename T>
  typename Tape<T>::Id emit(Tape<T>& tape, typename Tape<T>::Id input,
                            const std::vector<typename Tape<T>::Id>& param_ids,
                            const ForwardOptions& opt = {}) const;

  Tensor forward(const Tensor& input, const ForwardOptions& opt = {}) const;

  void check_input(const Shape& s) const;
};

/// Pyramid of Figure-3 shape: per-level feature extraction with adaptive
/// depth, shrink/transform/expand mapping, progressive transposed-conv
/// ascent with fusion, and a two-conv adjustment head.
ModelGraph build_cnp(const CnpConfig& config);

/// Plain stack baseline: (layers-1) 3x3 conv+PReLU stages and a 1x1 output
/// conv. Analytic receptive field is 2*(layers-1)+1.
ModelGraph build_single_level(int layers, int feature_channels = 56, int input_channels = 3,
                              int output_channels = 1);

/// Equal-depth independent branches over an input pyramid, summed at full
/// resolution. Branch width is chosen so the total parameter budget matches
/// build_cnp with the same config.
ModelGraph build_simple_multiscale(const CnpConfig& config);

/// He-normal conv weights, zero biases, 0.25 PReLU slopes,
/// bilinear(+noise) transposed convs. The final output conv uses a small
/// stddev so residual models start close to the identity.
void init_params(ModelGraph& graph, unsigned seed);

/// Writes a 2x-upsampling bilinear kernel (plus optional noise) into a
/// transposed-conv weight of shape [C, C, 3, 3].
void init_transposed_conv_bilinear(Tensor& weight, double noise_std, std::mt19937& rng);

std::int64_t param_count(const ModelGraph& graph);

}  // namespace cnp
