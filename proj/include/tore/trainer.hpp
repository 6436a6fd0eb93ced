// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Training with random glimpse sets and one random extractor depth per batch,
// loss L = L_c + λ·L_r, AdamW with a per-epoch cosine schedule, early
// stopping, and the evaluation harnesses built on exploration episodes.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tore/dataio.hpp"
#include "tore/policy.hpp"

namespace tore {

struct TrainConfig {
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 10;
  double lr_init = 1e-5;
  double lr_min = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double lambda = 0.1;
  int glimpses = 4;  // q
  std::uint64_t seed = 0;
  /// Reconstruction loss on unobserved patches only; false counts every pixel.
  bool masked_loss = true;
  /// < 0: κ ~ U{0..n} per batch; otherwise every batch uses this κ.
  int fixed_kappa = -1;
  double val_fraction = 0.1;

  void validate() const;
};

int sample_kappa(Rng& rng, int depth);

/// `q` distinct glimpse indices, uniform without replacement. Throws RangeError if q > grid size.
std::vector<int> sample_glimpses(Rng& rng, const GlimpseGrid& grid, int q);

struct LossReport {
  double L_c = 0;
  double L_r = 0;
  double L = 0;
  std::vector<double> sample_ce;
  std::vector<double> sample_rmse;
};

/// One sample's inputs to the loss. `reconstruction` and `target` are
/// [grid_size × patch_pixels]; `observed` flags grid positions.
struct LossInput {
  Tensor logits;
  int label = 0;
  Tensor reconstruction;
  Tensor target;
  std::vector<char> observed;
};

/// L_c and L_r are batch means; L = L_c + λ·L_r.
LossReport compute_loss(std::span<const LossInput> batch, double lambda, bool masked = true);

/// Rows of the reconstruction that enter L_r.
std::vector<char> counted_rows(int grid_size, std::span<const int> observed, bool masked);

template <typename T>
struct SampleLoss {
  Var<T> logits;
  Var<T> reconstruction;
  Var<T> ce;
  Var<T> rmse;
  Var<T> loss;  // (ce + λ·rmse) · weight
};

/// Single-pass forward over all glimpses, decoder reconstruction, and the
/// weighted per-sample loss.
template <typename T>
SampleLoss<T> sample_loss_graph(BasicGraph<T>& g, const BasicModel<T>& m, const BasicTensor<T>& image, int label,
                                std::span<const int> glimpses, int kappa, double lambda, bool masked,
                                double weight = 1.0) {
  const GlimpseGrid grid(m.config);
  std::vector<BasicGlimpse<T>> gl;
  gl.reserve(glimpses.size());
  for (int i : glimpses) gl.push_back(observe(image, m.config, grid.positions(i), i));
  ToreGraphOutput<T> out = tore_forward_graph<T>(g, m, gl, kappa);
  SampleLoss<T> s;
  s.logits = out.logits;
  s.reconstruction = decoder_graph(g, m, out.final_patches, out.positions);
  std::vector<int> all(static_cast<std::size_t>(m.config.grid_size()));
  for (int p = 0; p < m.config.grid_size(); ++p) all[static_cast<std::size_t>(p)] = p;
  s.ce = ad::cross_entropy(out.logits, label);
  s.rmse = ad::masked_rmse(s.reconstruction, extract_patches(image, m.config, all),
                           counted_rows(m.config.grid_size(), out.positions, masked));
  s.loss = ad::scale(ad::add(s.ce, ad::scale(s.rmse, static_cast<T>(lambda))), static_cast<T>(weight));
  return s;
}

/// Decoupled weight decay Adam; state follows the model's canonical parameter order.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}
  explicit AdamW(const TrainConfig& c) : AdamW(c.beta1, c.beta2, c.eps, c.weight_decay) {}

  void step(Model& model, double lr);
  int steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainExample {
  const Sample* sample = nullptr;
  std::vector<int> glimpses;
};

struct StepResult {
  LossReport loss;
  int kappa = 0;
};

/// One κ for the whole batch (from `rng`, or the fixed κ), per-sample graphs
/// with gradients accumulated as (ce + λ·rmse)/B, then one optimizer step.
StepResult train_step(Model& model, AdamW& optimizer, std::span<const TrainExample> batch, Rng& rng,
                      const TrainConfig& config, double lr);

/// Same, with κ given.
LossReport train_step_at(Model& model, AdamW& optimizer, std::span<const TrainExample> batch, int kappa,
                         const TrainConfig& config, double lr);

/// lr_min + (lr_init - lr_min)·(1 + cos(π·epoch/max_epochs))/2, epoch 0-based.
double cosine_lr(const TrainConfig& config, int epoch);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
  double lr = 0;
  std::vector<int> kappa_draws;  // histogram over κ = 0..n
};

struct FitResult {
  Model model;  // best-validation weights
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains from `init`. When `data.val` is empty, a seeded val_fraction of
/// train is held out. Throws ContractError on an empty training set.
FitResult fit(Model init, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});
FitResult fit(const ModelConfig& model_config, const DecoderConfig& decoder_config, const Dataset& data,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// CSV with `header_comment` lines prefixed by '#', then
/// epoch,train_loss,val_loss,val_acc,lr,kappa_draws.
std::string format_train_log(const std::vector<EpochLog>& log, const std::string& header_comment);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  Policy policy = Policy::ame;
  int kappa = 0;
  int steps = 4;
  std::uint64_t seed = 0;
  ColdStart cold_start = ColdStart::random;
  GlimpseScore score = GlimpseScore::sum;
  int jobs = 1;

  EpisodeOptions episode(std::size_t sample_index) const;
};

struct EvalResult {
  double accuracy = 0;
  double rmse = 0;  // on unobserved pixels at the final step
  double gflops = 0;
  int samples = 0;
};

EvalResult evaluate(const Model& model, std::span<const Sample> samples, const EvalOptions& options);

/// accuracy[i][j]: accuracy at step j+1 for kappas[i].
struct StepCurve {
  std::vector<int> kappas;
  std::vector<std::vector<double>> accuracy;
};

StepCurve step_curve_eval(const Model& model, std::span<const Sample> samples, const std::vector<int>& kappas,
                          const EvalOptions& options);

/// Glimpses gathered by an episode at `gather_kappa` with `options.policy`,
/// final prediction recomputed at `predict_kappa` on the same glimpse sequence.
double cross_policy_eval(const Model& model, std::span<const Sample> samples, int gather_kappa, int predict_kappa,
                         const EvalOptions& options);

struct FixedVsRandomRow {
  std::string training;  // "fixed" or "random"
  int kappa_eval = 0;
  double accuracy = 0;
};

/// Trains n+1 fixed-κ models and one random-κ model from the same
/// initialization. Fixed rows evaluate each model at its own κ; random rows
/// evaluate the single random-κ model at every κ.
std::vector<FixedVsRandomRow> fixed_vs_random(const ModelConfig& model_config, const DecoderConfig& decoder_config,
                                              const Dataset& data, const TrainConfig& config,
                                              const EvalOptions& eval_options);

/// Runs `fn(i)` for i in [0, n) over up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace tore
