#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cnp/graph.hpp"
#include "cnp/tape.hpp"
#include "cnp/tensor.hpp"

namespace cnp {

/// Mean-squared intensity difference plus lambda times mean-squared
/// forward-difference gradient mismatch.
struct LossSpec {
  double lambda = 1.0;
};

enum class OptimizerKind { SgdMomentum, Adam };

struct TrainConfig {
  int patch = 81;
  int batch = 32;
  double lr = 1e-5;
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double momentum = 0.9;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  long steps = 1000;
  unsigned seed = 0;
  int eval_every = 0;        // 0 disables periodic held-out evaluation
  int threads = 0;           // 0: hardware concurrency; batch items run in parallel
  std::string curve_path;    // optional CSV: step,loss,heldout_psnr
  std::string checkpoint_path;  // optional, written at the end of the run
};

enum class DegradationKind { DepthHoles, SparseVisible, AdditiveNoise };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::DepthHoles;
  // depth-holes: rectangles plus random-walk blobs, zeroed with mask 0,
  // Gaussian noise on the surviving depth values.
  int hole_count = 12;
  int hole_min = 4, hole_max = 64;
  double blob_fraction = 0.10;  // target fraction of pixels turned into blob holes
  double surviving_noise_sigma = 0.01;
  // sparse-visible
  double visible_fraction = 0.05;
  int dilate_radius = 4;
  // additive-noise
  double gaussian_sigma = 0.01;
  bool poisson = false;
  unsigned seed = 0;
};

/// One training example; `input`/`target` are 1xCxHxW.
struct Sample {
  Tensor input;
  Tensor target;
};

/// Forward differences, dx then dy channel blocks, zero at the trailing
/// column/row (eager twin of the tape op).
template <typename T>
TensorT<T> image_gradient(const TensorT<T>& x);

double loss_value(const Tensor& pred, const Tensor& target, const LossSpec& spec = {});

/// Emits the training loss onto a tape.
template <typename T>
typename Tape<T>::Id build_loss(Tape<T>& tape, typename Tape<T>::Id pred,
                                typename Tape<T>::Id target, double lambda);

/// 10*log10(maxval^2 / MSE), capped at 99 dB (the MSE=0 sentinel).
double psnr(const Tensor& a, const Tensor& b, double max_val);

/// depth-holes expects clean channels [gray, depth] and produces input
/// [gray, holed depth, mask] with target [depth]. sparse-visible and
/// additive-noise corrupt all channels and target the clean image.
Sample degrade(const Tensor& clean, const DegradationSpec& spec);

enum class FilterKind { Box, Gaussian, Bilateral };

struct FilterParams {
  int radius = 2;             // kernel size 2*radius+1 (odd by construction)
  double sigma_space = 1.5;   // Gaussian / bilateral spatial sigma
  double sigma_range = 0.1;   // bilateral range sigma
};

/// Deterministic brute-force reference filters used to synthesize
/// (input, filtered) training pairs for filter learning.
Tensor oracle_filter(const Tensor& img, FilterKind kind, const FilterParams& params);

/// Uniformly random aligned crops, identical for input and target.
/// Deterministic per (seed, step): draw order is item-major (y then x, one
/// image index first).
class PatchSampler {
 public:
  PatchSampler(int patch, unsigned seed) : patch_(patch), rng_(seed) {}
  struct Crop {
    int image = 0, y = 0, x = 0;
  };
  Crop next(const std::vector<Sample>& dataset);
  std::pair<Tensor, Tensor> batch(const std::vector<Sample>& dataset, int batch);

 private:
  int patch_;
  std::mt19937 rng_;
};

std::pair<Tensor, Tensor> sample_patches(const std::vector<Sample>& dataset, int patch, int batch,
                                         unsigned seed);

struct TrainResult {
  std::vector<float> losses;                       // one entry per step
  std::vector<std::pair<long, double>> heldout;    // (step, psnr)
  double final_heldout_psnr = 0.0;
};

/// sample -> forward -> loss -> backward -> optimizer step. Batch items are
/// evaluated on per-item tapes (possibly in parallel) and their gradients
/// accumulated in item order, so runs are deterministic for a fixed seed.
/// Throws TrainingError with the step index and last finite loss on NaN.
TrainResult train_loop(ModelGraph& graph, const std::vector<Sample>& train,
                       const std::vector<Sample>& heldout, const TrainConfig& config,
                       const LossSpec& loss = {});

/// Mean PSNR over the set, inputs reflect-padded to the model multiple and
/// predictions cropped back. maxval 1.0 corresponds to the internal range.
double evaluate(const ModelGraph& graph, const std::vector<Sample>& test, double max_val = 1.0,
                int threads = 0, const ForwardOptions& opt = {});

namespace detail {
/// Sparse-visible mask generator, exposed so tests can measure the visible
/// fraction before and after dilation.
std::vector<std::uint8_t> sparse_visible_mask(int h, int w, const DegradationSpec& spec,
                                              unsigned seed,
                                              std::vector<std::uint8_t>* before_dilation);
}  // namespace detail

}  // namespace cnp
