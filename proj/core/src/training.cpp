#include "cnp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "cnp/checkpoint.hpp"
#include "cnp/image_io.hpp"
#include "parallel.hpp"

namespace cnp {

template <typename T>
TensorT<T> image_gradient(const TensorT<T>& x) {
  const auto& s = x.shape;
  TensorT<T> out({s.n, 2 * s.c, s.h, s.w});
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c) {
      const T* xp = x.plane(b, c);
      T* gx = out.plane(b, c);
      T* gy = out.plane(b, s.c + c);
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          const std::int64_t i = std::int64_t(y) * s.w + xx;
          gx[i] = (xx + 1 < s.w) ? xp[i + 1] - xp[i] : T(0);
          gy[i] = (y + 1 < s.h) ? xp[i + s.w] - xp[i] : T(0);
        }
    }
  return out;
}

template TensorT<float> image_gradient<float>(const TensorT<float>&);
template TensorT<double> image_gradient<double>(const TensorT<double>&);

double loss_value(const Tensor& pred, const Tensor& target, const LossSpec& spec) {
  if (!(pred.shape == target.shape))
    throw ConfigError("loss: shape mismatch " + pred.shape.str() + " vs " + target.shape.str());
  double intensity = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = double(pred.data[i]) - target.data[i];
    intensity += d * d;
  }
  intensity /= double(pred.size());
  const Tensor gp = image_gradient(pred);
  const Tensor gt = image_gradient(target);
  double grad = 0.0;
  for (std::size_t i = 0; i < gp.data.size(); ++i) {
    const double d = double(gp.data[i]) - gt.data[i];
    grad += d * d;
  }
  grad /= double(gp.size());
  return intensity + spec.lambda * grad;
}

template <typename T>
typename Tape<T>::Id build_loss(Tape<T>& tape, typename Tape<T>::Id pred,
                                typename Tape<T>::Id target, double lambda) {
  auto diff = tape.sub(pred, target);
  auto intensity = tape.reduce_mean(tape.mul(diff, diff));
  auto gdiff = tape.sub(tape.image_gradient(pred), tape.image_gradient(target));
  auto grad = tape.reduce_mean(tape.mul(gdiff, gdiff));
  return tape.add(intensity, tape.scale(grad, lambda));
}

template Tape<float>::Id build_loss<float>(Tape<float>&, Tape<float>::Id, Tape<float>::Id, double);
template Tape<double>::Id build_loss<double>(Tape<double>&, Tape<double>::Id, Tape<double>::Id,
                                             double);

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  if (!(a.shape == b.shape))
    throw ConfigError("psnr: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  if (max_val <= 0) throw ConfigError("psnr: max_val must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_val * max_val / mse));
}

namespace {

using Mask = std::vector<std::uint8_t>;

void dilate_square(Mask& mask, int h, int w, int radius) {
  if (radius < 1) return;
  // Separable Chebyshev dilation: rows then columns.
  Mask tmp(mask.size(), 0);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = mask.data() + std::size_t(y) * w;
    std::uint8_t* out = tmp.data() + std::size_t(y) * w;
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int d = -radius; d <= radius && !v; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w && row[xx]) v = 1;
      }
      out[x] = v;
    }
  }
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      std::uint8_t v = 0;
      for (int d = -radius; d <= radius && !v; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h && tmp[std::size_t(yy) * w + x]) v = 1;
      }
      mask[std::size_t(y) * w + x] = v;
    }
}

Mask make_hole_mask(int h, int w, const DegradationSpec& spec, std::mt19937& rng) {
  Mask visible(std::size_t(h) * w, 1);
  std::uniform_int_distribution<int> side(spec.hole_min, std::max(spec.hole_min, spec.hole_max));
  for (int i = 0; i < spec.hole_count; ++i) {
    const int hh = std::min(side(rng), h);
    const int ww = std::min(side(rng), w);
    std::uniform_int_distribution<int> py(0, h - hh), px(0, w - ww);
    const int y0 = py(rng), x0 = px(rng);
    for (int y = y0; y < y0 + hh; ++y)
      std::fill(visible.begin() + std::size_t(y) * w + x0,
                visible.begin() + std::size_t(y) * w + x0 + ww, std::uint8_t(0));
  }
  // Random-walk blobs until the requested fraction of pixels is holed.
  const std::int64_t want = std::llround(spec.blob_fraction * h * w);
  std::int64_t holed = 0;
  for (const auto v : visible) holed += v == 0;
  std::uniform_int_distribution<int> anyy(0, h - 1), anyx(0, w - 1), step(-1, 1);
  int guard = 0;
  while (holed < want && ++guard < 10000) {
    int y = anyy(rng), x = anyx(rng);
    const int walk = 16 * std::max(4, spec.hole_min);
    for (int s = 0; s < walk && holed < want; ++s) {
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const int yy = std::min(h - 1, y + dy), xx = std::min(w - 1, x + dx);
          auto& v = visible[std::size_t(yy) * w + xx];
          if (v) {
            v = 0;
            ++holed;
          }
        }
      y = std::clamp(y + step(rng), 0, h - 1);
      x = std::clamp(x + step(rng), 0, w - 1);
    }
  }
  return visible;
}

Mask make_sparse_visible_mask(int h, int w, const DegradationSpec& spec, std::mt19937& rng,
                              Mask* before_dilation = nullptr) {
  // Clustered sampling: i.i.d. seeds expanded by one pixel so the marginal
  // per-pixel visible probability (before the radius-4 dilation) equals
  // visible_fraction while the dilated coverage stays partial.
  const double q = 1.0 - std::pow(1.0 - spec.visible_fraction, 1.0 / 9.0);
  std::bernoulli_distribution seed_dist(q);
  Mask mask(std::size_t(h) * w, 0);
  for (auto& v : mask) v = seed_dist(rng) ? 1 : 0;
  dilate_square(mask, h, w, 1);
  if (before_dilation) *before_dilation = mask;
  dilate_square(mask, h, w, spec.dilate_radius);
  return mask;
}

}  // namespace

// Exposed for the degradation statistics tests.
namespace detail {
std::vector<std::uint8_t> sparse_visible_mask(int h, int w, const DegradationSpec& spec,
                                              unsigned seed,
                                              std::vector<std::uint8_t>* before_dilation) {
  std::mt19937 rng(seed);
  return make_sparse_visible_mask(h, w, spec, rng, before_dilation);
}
}  // namespace detail

Sample degrade(const Tensor& clean, const DegradationSpec& spec) {
  if (clean.shape.n != 1) throw ConfigError("degrade: expected a single image, got " +
                                            clean.shape.str());
  const int h = clean.shape.h, w = clean.shape.w;
  std::mt19937 rng(spec.seed);
  Sample out;
  switch (spec.kind) {
    case DegradationKind::DepthHoles: {
      if (clean.shape.c != 2)
        throw ConfigError("degrade(depth-holes): clean stack must be [gray, depth], got " +
                          clean.shape.str());
      const Mask visible = make_hole_mask(h, w, spec, rng);
      out.input = Tensor({1, 3, h, w});
      out.target = Tensor({1, 1, h, w});
      std::normal_distribution<double> noise(0.0, spec.surviving_noise_sigma);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const bool vis = visible[std::size_t(y) * w + x] != 0;
          const float depth = clean.at(0, 1, y, x);
          out.input.at(0, 0, y, x) = clean.at(0, 0, y, x);
          float d = 0.0f;
          if (vis) {
            d = depth;
            if (spec.surviving_noise_sigma > 0)
              d = std::clamp(d + float(noise(rng)), 0.0f, 1.0f);
          }
          out.input.at(0, 1, y, x) = d;
          out.input.at(0, 2, y, x) = vis ? 1.0f : 0.0f;
          out.target.at(0, 0, y, x) = depth;
        }
      break;
    }
    case DegradationKind::SparseVisible: {
      const Mask mask = make_sparse_visible_mask(h, w, spec, rng);
      out.input = Tensor({1, clean.shape.c + 1, h, w});
      out.target = clean;
      for (int c = 0; c < clean.shape.c; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.input.at(0, c, y, x) =
                mask[std::size_t(y) * w + x] ? clean.at(0, c, y, x) : 0.0f;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out.input.at(0, clean.shape.c, y, x) = float(mask[std::size_t(y) * w + x]);
      break;
    }
    case DegradationKind::AdditiveNoise: {
      out.input = clean;
      out.target = clean;
      if (spec.poisson) {
        // Shot noise at a photon-count scale of 255 per unit intensity.
        for (auto& v : out.input.data) {
          std::poisson_distribution<int> shot(std::max(0.0, double(v) * 255.0));
          v = float(shot(rng)) / 255.0f;
        }
      }
      if (spec.gaussian_sigma > 0) {
        std::normal_distribution<double> noise(0.0, spec.gaussian_sigma);
        for (auto& v : out.input.data) v = float(v + noise(rng));
      }
      for (auto& v : out.input.data) v = std::clamp(v, 0.0f, 1.0f);
      break;
    }
    default:
      throw ConfigError("degrade: unknown degradation kind");
  }
  return out;
}

Tensor oracle_filter(const Tensor& img, FilterKind kind, const FilterParams& params) {
  if (params.radius < 0) throw ConfigError("oracle_filter: radius must be >= 0");
  const int r = params.radius;
  const int h = img.shape.h, w = img.shape.w;
  Tensor out(img.shape);
  auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };

  std::vector<double> kernel;
  if (kind == FilterKind::Box || kind == FilterKind::Gaussian) {
    kernel.resize(std::size_t(2 * r + 1) * (2 * r + 1));
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        double v = 1.0;
        if (kind == FilterKind::Gaussian) {
          const double s2 = std::max(params.sigma_space * params.sigma_space, 1e-12);
          v = std::exp(-(dy * dy + dx * dx) / (2.0 * s2));
        }
        kernel[std::size_t(dy + r) * (2 * r + 1) + (dx + r)] = v;
        sum += v;
      }
    for (auto& v : kernel) v /= sum;
  }

  for (int b = 0; b < img.shape.n; ++b)
    for (int c = 0; c < img.shape.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          if (kind == FilterKind::Bilateral) {
            const double center = img.at(b, c, y, x);
            const double ss2 = std::max(params.sigma_space * params.sigma_space, 1e-12);
            const double sr2 = std::max(params.sigma_range * params.sigma_range, 1e-12);
            double norm = 0.0;
            for (int dy = -r; dy <= r; ++dy)
              for (int dx = -r; dx <= r; ++dx) {
                const double v = img.at(b, c, clampi(y + dy, h), clampi(x + dx, w));
                const double wgt = std::exp(-(dy * dy + dx * dx) / (2.0 * ss2)) *
                                   std::exp(-(v - center) * (v - center) / (2.0 * sr2));
                acc += wgt * v;
                norm += wgt;
              }
            acc /= norm;
          } else {
            for (int dy = -r; dy <= r; ++dy)
              for (int dx = -r; dx <= r; ++dx)
                acc += kernel[std::size_t(dy + r) * (2 * r + 1) + (dx + r)] *
                       img.at(b, c, clampi(y + dy, h), clampi(x + dx, w));
          }
          out.at(b, c, y, x) = float(acc);
        }
  return out;
}

PatchSampler::Crop PatchSampler::next(const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw ConfigError("sample_patches: dataset is empty");
  Crop crop;
  std::uniform_int_distribution<int> pick(0, int(dataset.size()) - 1);
  crop.image = pick(rng_);
  const auto& s = dataset[crop.image].input.shape;
  if (s.h < patch_ || s.w < patch_)
    throw ConfigError("sample_patches: image " + s.str() + " smaller than patch " +
                      std::to_string(patch_));
  std::uniform_int_distribution<int> py(0, s.h - patch_), px(0, s.w - patch_);
  crop.y = py(rng_);
  crop.x = px(rng_);
  return crop;
}

std::pair<Tensor, Tensor> PatchSampler::batch(const std::vector<Sample>& dataset, int batch) {
  if (dataset.empty()) throw ConfigError("sample_patches: dataset is empty");
  const int ci = dataset[0].input.shape.c;
  const int ct = dataset[0].target.shape.c;
  Tensor in({batch, ci, patch_, patch_});
  Tensor tg({batch, ct, patch_, patch_});
  for (int b = 0; b < batch; ++b) {
    const Crop crop = next(dataset);
    const auto& s = dataset[crop.image];
    for (int c = 0; c < ci; ++c)
      for (int y = 0; y < patch_; ++y)
        for (int x = 0; x < patch_; ++x)
          in.at(b, c, y, x) = s.input.at(0, c, crop.y + y, crop.x + x);
    for (int c = 0; c < ct; ++c)
      for (int y = 0; y < patch_; ++y)
        for (int x = 0; x < patch_; ++x)
          tg.at(b, c, y, x) = s.target.at(0, c, crop.y + y, crop.x + x);
  }
  return {std::move(in), std::move(tg)};
}

std::pair<Tensor, Tensor> sample_patches(const std::vector<Sample>& dataset, int patch, int batch,
                                         unsigned seed) {
  PatchSampler sampler(patch, seed);
  return sampler.batch(dataset, batch);
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<Parameter>& params) : cfg_(cfg) {
    state1_.reserve(params.size());
    state2_.reserve(params.size());
    for (const auto& p : params) {
      state1_.emplace_back(p.value.shape);
      if (cfg.optimizer == OptimizerKind::Adam) state2_.emplace_back(p.value.shape);
    }
  }

  void step(std::vector<Parameter>& params, const std::vector<Tensor>& grads) {
    ++t_;
    const float lr = float(cfg_.lr);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p].value.data;
      const auto& g = grads[p].data;
      if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
        auto& v = state1_[p].data;
        const float mu = float(cfg_.momentum);
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] - lr * g[i];
          w[i] += v[i];
        }
      } else {
        auto& m = state1_[p].data;
        auto& v = state2_[p].data;
        const float b1 = float(cfg_.adam_beta1), b2 = float(cfg_.adam_beta2);
        const float c1 = 1.0f - std::pow(b1, float(t_));
        const float c2 = 1.0f - std::pow(b2, float(t_));
        const float eps = float(cfg_.adam_eps);
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = b1 * m[i] + (1.0f - b1) * g[i];
          v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
          w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
      }
    }
  }

 private:
  TrainConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> state1_, state2_;
};

}  // namespace

TrainResult train_loop(ModelGraph& graph, const std::vector<Sample>& train,
                       const std::vector<Sample>& heldout, const TrainConfig& config,
                       const LossSpec& loss) {
  if (train.empty()) throw ConfigError("train_loop: dataset is empty");
  const int multiple = graph.divisibility();
  PatchSampler sampler(config.patch, config.seed);
  Optimizer opt(config, graph.params);
  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(config.steps));

  std::ofstream curve;
  if (!config.curve_path.empty()) {
    curve.open(config.curve_path, std::ios::trunc);
    if (!curve) throw IoError("cannot open " + config.curve_path + " for writing");
    curve << "step,loss,heldout_psnr\n";
  }

  const int batch = config.batch;
  std::vector<Tensor> item_in(batch), item_tg(batch);
  std::vector<std::vector<Tensor>> item_grads(batch);
  std::vector<double> item_loss(batch);
  std::vector<Tensor> grad_sum;
  for (const auto& p : graph.params) grad_sum.emplace_back(p.value.shape);

  double last_finite = 0.0;
  for (long step = 0; step < config.steps; ++step) {
    // Crop draws happen on the single sampler stream so the schedule is a
    // pure function of the seed, independent of thread count.
    for (int b = 0; b < batch; ++b) {
      const auto crop = sampler.next(train);
      const auto& s = train[crop.image];
      const int ci = s.input.shape.c, ct = s.target.shape.c;
      Tensor in({1, ci, config.patch, config.patch});
      Tensor tg({1, ct, config.patch, config.patch});
      for (int c = 0; c < ci; ++c)
        for (int y = 0; y < config.patch; ++y)
          for (int x = 0; x < config.patch; ++x)
            in.at(0, c, y, x) = s.input.at(0, c, crop.y + y, crop.x + x);
      for (int c = 0; c < ct; ++c)
        for (int y = 0; y < config.patch; ++y)
          for (int x = 0; x < config.patch; ++x)
            tg.at(0, c, y, x) = s.target.at(0, c, crop.y + y, crop.x + x);
      item_in[b] = pad_reflect(in, multiple).first;
      item_tg[b] = pad_reflect(tg, multiple).first;
    }

    detail::parallel_for(batch, config.threads, [&](int b) {
      Tape<float> tape;
      auto params = graph.bind_params<float>(tape, true);
      auto in = tape.leaf(item_in[b], false);
      auto pred = graph.emit<float>(tape, in, params);
      auto tg = tape.leaf(item_tg[b], false);
      auto root = build_loss<float>(tape, pred, tg, loss.lambda);
      tape.backward(root);
      item_loss[b] = tape.value(root).data[0];
      auto& grads = item_grads[b];
      grads.resize(graph.params.size());
      for (std::size_t p = 0; p < graph.params.size(); ++p)
        grads[p] = tape.has_grad(params[p]) ? tape.grad(params[p])
                                            : Tensor(graph.params[p].value.shape);
    });

    double mean_loss = 0.0;
    for (int b = 0; b < batch; ++b) mean_loss += item_loss[b];
    mean_loss /= batch;
    if (!std::isfinite(mean_loss))
      throw TrainingError("train_loop: loss diverged to NaN/Inf at step " + std::to_string(step) +
                              " (last finite loss " + std::to_string(last_finite) + ")",
                          step, last_finite);
    last_finite = mean_loss;
    result.losses.push_back(float(mean_loss));

    const float inv_batch = 1.0f / float(batch);
    for (std::size_t p = 0; p < graph.params.size(); ++p) {
      auto& acc = grad_sum[p].data;
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (int b = 0; b < batch; ++b) {
        const auto& g = item_grads[b][p].data;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
      }
      for (auto& v : acc) v *= inv_batch;
    }
    opt.step(graph.params, grad_sum);

    const bool eval_now =
        config.eval_every > 0 && !heldout.empty() && ((step + 1) % config.eval_every == 0);
    double held = 0.0;
    if (eval_now) {
      held = evaluate(graph, heldout, 1.0, config.threads);
      result.heldout.emplace_back(step + 1, held);
    }
    if (curve.is_open()) {
      curve << step << "," << mean_loss << ",";
      if (eval_now) curve << held;
      curve << "\n";
    }
  }

  if (!heldout.empty()) {
    result.final_heldout_psnr = evaluate(graph, heldout, 1.0, config.threads);
    result.heldout.emplace_back(config.steps, result.final_heldout_psnr);
  }
  if (!config.checkpoint_path.empty()) save_checkpoint(graph, config.checkpoint_path);
  return result;
}

double evaluate(const ModelGraph& graph, const std::vector<Sample>& test, double max_val,
                int threads, const ForwardOptions& opt) {
  if (test.empty()) throw ConfigError("evaluate: test set is empty");
  std::vector<double> scores(test.size());
  detail::parallel_for(int(test.size()), threads, [&](int i) {
    const auto& s = test[i];
    auto [padded, rec] = pad_reflect(s.input, graph.divisibility());
    Tensor pred = crop(graph.forward(padded, opt), rec);
    scores[i] = psnr(pred, s.target, max_val);
  });
  double mean = 0.0;
  for (double v : scores) mean += v;
  return mean / double(scores.size());
}

}  // namespace cnp
