#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnp/graph.hpp"

namespace cnp {

struct RfTraceEntry {
  std::string layer;
  int rf = 1;    // exact input-support side of one output element of this layer
  int jump = 1;  // input-pixel stride between adjacent positions of this layer
};

struct RfState {
  int rf = 1;    // receptive field side of the network output, in input pixels
  int jump = 1;
  std::vector<RfTraceEntry> trace;
};

/// Exact receptive field by composing per-layer index intervals over the DAG
/// (hull across fused paths). Matches the measured gradient support
/// position-for-position; with 2x2 pooling the exact support can be even.
/// Invariant to input size.
RfState analytic_rf(const ModelGraph& graph);

/// Smallest aligned input side for which the center-pixel probe fits without
/// border clipping.
int empirical_rf_min_input(const ModelGraph& graph);

/// Backpropagates from the center output pixel and returns the bounding-box
/// side of input positions with nonzero gradient. Runs in double precision
/// with strictly positive weights and average pooling so no path inside the
/// field can mask or cancel to exact zero.
int empirical_rf(const ModelGraph& graph, int input_size);

struct LevelCost {
  std::int64_t macs = 0;
  std::int64_t params = 0;
  std::int64_t extraction_macs = 0;
  std::int64_t activation_elems = 0;  // sum of layer output sizes at this level
};

/// Analytic cost model. Convolutions count outC*outH*outW*inC*k^2 MACs;
/// pooling, upsampling and elementwise layers count one op per output
/// element. total_* fields are exact sums of the per-level entries;
/// peak_activation_elems is the high-water mark of a straight-line liveness
/// schedule over the build order.
struct CostReport {
  std::vector<LevelCost> per_level;
  std::int64_t total_macs = 0;
  std::int64_t total_params = 0;
  std::int64_t total_activation_elems = 0;
  std::int64_t peak_activation_elems = 0;
  int receptive_field = 0;
};

CostReport cost_report(const ModelGraph& graph, int input_h, int input_w);

}  // namespace cnp
