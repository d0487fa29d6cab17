#pragma once

#include <vector>

#include "cnp/tensor.hpp"
#include "cnp/training.hpp"

namespace cnp {

/// Procedural piecewise-smooth scene: overlapping rectangles/ellipses with
/// per-shape depth planes and albedos, composited back to front. Returns a
/// 1x2xHxW stack of aligned [gray, depth] channels in [0,1].
struct SceneParams {
  int height = 128;
  int width = 128;
  int shapes = 9;
  unsigned seed = 0;
};

Tensor make_scene(const SceneParams& params);

/// count degraded scenes for the depth-restoration task; sample i uses
/// scene seed (seed, i) and degradation seed (spec.seed, i).
std::vector<Sample> make_depth_dataset(int count, int height, int width,
                                       const DegradationSpec& spec, unsigned seed);

}  // namespace cnp
