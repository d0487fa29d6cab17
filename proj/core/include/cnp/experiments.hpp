#pragma once

#include <map>
#include <string>
#include <vector>

#include "cnp/graph.hpp"
#include "cnp/synthetic.hpp"
#include "cnp/training.hpp"

namespace cnp {

/// Frozen setup for the level/fusion ablation runs on the synthetic
/// depth-restoration task.
struct TrendProfile {
  std::string name;
  int feature_channels = 16;
  int embed_channels = 6;
  int transform_layers = 1;
  int image_size = 144;
  int train_images = 32;
  int test_images = 8;
  int hole_min = 4, hole_max = 64;
  int hole_count = 10;
  double blob_fraction = 0.08;
  int patch = 81;
  int batch = 4;
  long steps = 1200;
  double lr = 2e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  unsigned seed = 7;
  int threads = 0;
};

/// Reduced-budget run; finishes in tens of minutes on a small CPU.
TrendProfile quick_trend_profile();
/// Long-run protocol (32k steps, batch 32); several hours on a desktop CPU.
TrendProfile full_trend_profile();

std::vector<Sample> trend_train_set(const TrendProfile& profile);
std::vector<Sample> trend_test_set(const TrendProfile& profile);
/// Test set with graded hole sizes up to most of the canvas, for the
/// level-blocking probe.
std::vector<Sample> blocking_test_set(const TrendProfile& profile);

CnpConfig trend_config(const TrendProfile& profile, int levels);

struct TrendRun {
  ModelGraph model;
  TrainResult train;
  double test_psnr = 0.0;
};

/// Trains one model (Cnp or SimpleMultiscale) on the profile's task and
/// evaluates it on `test`.
TrendRun run_trend_model(BuilderKind kind, int levels, const TrendProfile& profile,
                         const std::vector<Sample>& train, const std::vector<Sample>& test);

/// PSNR as levels 0..L-1 are progressively unblocked: entry k evaluates the
/// model with levels above k zeroed out of the reconstruction.
std::vector<double> blocking_curve(const ModelGraph& model, const std::vector<Sample>& test,
                                   int threads = 0);

}  // namespace cnp
