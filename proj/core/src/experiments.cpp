#include "cnp/experiments.hpp"

namespace cnp {

TrendProfile quick_trend_profile() {
  TrendProfile p;
  p.name = "quick";
  return p;
}

TrendProfile full_trend_profile() {
  TrendProfile p;
  p.name = "full";
  p.feature_channels = 12;
  p.embed_channels = 6;
  p.image_size = 192;
  p.train_images = 64;
  p.test_images = 12;
  p.batch = 32;
  p.steps = 32000;
  p.lr = 5e-4;
  return p;
}

namespace {

DegradationSpec trend_degradation(const TrendProfile& p, unsigned seed_offset) {
  DegradationSpec d;
  d.kind = DegradationKind::DepthHoles;
  d.hole_min = p.hole_min;
  d.hole_max = p.hole_max;
  d.hole_count = p.hole_count;
  d.blob_fraction = p.blob_fraction;
  d.surviving_noise_sigma = 0.01;
  d.seed = p.seed + seed_offset;
  return d;
}

}  // namespace

std::vector<Sample> trend_train_set(const TrendProfile& p) {
  return make_depth_dataset(p.train_images, p.image_size, p.image_size,
                            trend_degradation(p, 1000), p.seed + 1);
}

std::vector<Sample> trend_test_set(const TrendProfile& p) {
  return make_depth_dataset(p.test_images, p.image_size, p.image_size, trend_degradation(p, 2000),
                            p.seed + 2);
}

std::vector<Sample> blocking_test_set(const TrendProfile& p) {
  // Hole sizes graded against the per-level receptive fields so each
  // additional level has work only it can do.
  const int size = std::max(p.image_size, 160);
  DegradationSpec d = trend_degradation(p, 3000);
  d.hole_min = 10;
  d.hole_max = size * 3 / 4;
  d.hole_count = 6;
  d.blob_fraction = 0.05;
  return make_depth_dataset(std::max(6, p.test_images), size, size, d, p.seed + 3);
}

CnpConfig trend_config(const TrendProfile& p, int levels) {
  CnpConfig c;
  c.levels = levels;
  c.transform_layers = p.transform_layers;
  c.feature_channels = p.feature_channels;
  c.embed_channels = p.embed_channels;
  c.input_channels = 3;   // gray, holed depth, mask
  c.output_channels = 1;  // restored depth
  c.residual = true;
  c.residual_channel = 1;
  return c;
}

TrendRun run_trend_model(BuilderKind kind, int levels, const TrendProfile& profile,
                         const std::vector<Sample>& train, const std::vector<Sample>& test) {
  TrendRun run;
  const CnpConfig config = trend_config(profile, levels);
  run.model = kind == BuilderKind::Cnp ? build_cnp(config) : build_simple_multiscale(config);
  init_params(run.model, profile.seed + 17u * static_cast<unsigned>(levels));

  TrainConfig tc;
  tc.patch = profile.patch;
  tc.batch = profile.batch;
  tc.lr = profile.lr;
  tc.optimizer = profile.optimizer;
  tc.steps = profile.steps;
  tc.seed = profile.seed + 31u * static_cast<unsigned>(levels);
  tc.threads = profile.threads;
  run.train = train_loop(run.model, train, {}, tc);
  run.test_psnr = evaluate(run.model, test, 1.0, profile.threads);
  return run;
}

std::vector<double> blocking_curve(const ModelGraph& model, const std::vector<Sample>& test,
                                   int threads) {
  std::vector<double> curve;
  for (int k = 0; k < model.levels(); ++k) {
    ForwardOptions opt;
    opt.max_active_level = k;
    curve.push_back(evaluate(model, test, 1.0, threads, opt));
  }
  return curve;
}

}  // namespace cnp
