// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace tore {

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("train: batch_size must be at least 1");
  if (max_epochs < 1) throw UsageError("train: max_epochs must be at least 1");
  if (patience < 0) throw UsageError("train: patience must be non-negative");
  if (lr_init < 0 || lr_min < 0) throw UsageError("train: learning rates must be non-negative");
  if (lambda < 0) throw UsageError("train: lambda must be non-negative");
  if (glimpses < 1) throw UsageError("train: glimpses must be at least 1");
  if (val_fraction < 0 || val_fraction >= 1) throw UsageError("train: val_fraction must lie in [0, 1)");
}

int sample_kappa(Rng& rng, int depth) { return rng.uniform_int(0, depth); }

std::vector<int> sample_glimpses(Rng& rng, const GlimpseGrid& grid, int q) {
  if (q < 0 || q > grid.size()) {
    throw RangeError("sample_glimpses: cannot draw " + std::to_string(q) + " of " + std::to_string(grid.size()) + " glimpses");
  }
  std::vector<int> pool(static_cast<std::size_t>(grid.size()));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < q; ++i) {
    const int j = rng.uniform_int(i, grid.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(q));
  return pool;
}

std::vector<char> counted_rows(int grid_size, std::span<const int> observed, bool masked) {
  std::vector<char> counted(static_cast<std::size_t>(grid_size), 1);
  if (masked) {
    for (int p : observed) {
      if (p < 0 || p >= grid_size) throw RangeError("counted_rows: position outside the grid");
      counted[static_cast<std::size_t>(p)] = 0;
    }
  }
  return counted;
}

LossReport compute_loss(std::span<const LossInput> batch, double lambda, bool masked) {
  LossReport r;
  if (batch.empty()) return r;
  for (const LossInput& in : batch) {
    Graph g(false);
    const int c = static_cast<int>(in.logits.size());
    Var<float> ce = ad::cross_entropy(g.constant(in.logits.reshaped({1, c})), in.label);
    if (static_cast<int>(in.observed.size()) != in.reconstruction.rows()) {
      throw DimensionError("compute_loss: observed mask must have one flag per grid position");
    }
    std::vector<int> obs;
    for (std::size_t p = 0; p < in.observed.size(); ++p)
      if (in.observed[p]) obs.push_back(static_cast<int>(p));
    Var<float> rmse = ad::masked_rmse(g.constant(in.reconstruction), in.target,
                                      counted_rows(in.reconstruction.rows(), obs, masked));
    r.sample_ce.push_back(ce.value()[0]);
    r.sample_rmse.push_back(rmse.value()[0]);
  }
  const double n = static_cast<double>(batch.size());
  for (double v : r.sample_ce) r.L_c += v;
  for (double v : r.sample_rmse) r.L_r += v;
  r.L_c /= n;
  r.L_r /= n;
  r.L = r.L_c + lambda * r.L_r;
  return r;
}

void AdamW::step(Model& model, double lr) {
  if (m_.empty()) {
    model.visit([&](const Parameter<float>& p) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    });
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  const float decay = static_cast<float>(lr * weight_decay_);
  std::size_t k = 0;
  model.visit([&](Parameter<float>& p) {
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps) + decay * p.value[i];
    }
  });
}

LossReport train_step_at(Model& model, AdamW& optimizer, std::span<const TrainExample> batch, int kappa,
                         const TrainConfig& config, double lr) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  model.zero_grad();
  LossReport r;
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    Graph g(true);
    SampleLoss<float> s = sample_loss_graph<float>(g, model, ex.sample->image, ex.sample->label, ex.glimpses, kappa,
                                                   config.lambda, config.masked_loss, weight);
    g.backward(s.loss);
    r.sample_ce.push_back(s.ce.value()[0]);
    r.sample_rmse.push_back(s.rmse.value()[0]);
  }
  for (double v : r.sample_ce) r.L_c += v;
  for (double v : r.sample_rmse) r.L_r += v;
  r.L_c *= weight;
  r.L_r *= weight;
  r.L = r.L_c + config.lambda * r.L_r;
  optimizer.step(model, lr);
  return r;
}

StepResult train_step(Model& model, AdamW& optimizer, std::span<const TrainExample> batch, Rng& rng,
                      const TrainConfig& config, double lr) {
  const int kappa = config.fixed_kappa >= 0 ? config.fixed_kappa : sample_kappa(rng, model.config.depth);
  return {train_step_at(model, optimizer, batch, kappa, config, lr), kappa};
}

double cosine_lr(const TrainConfig& c, int epoch) {
  return c.lr_min + 0.5 * (c.lr_init - c.lr_min) * (1.0 + std::cos(std::numbers::pi * epoch / c.max_epochs));
}

namespace {

struct ValItem {
  const Sample* sample;
  std::vector<int> glimpses;
  int kappa;
};

std::pair<double, double> validate_model(const Model& model, const std::vector<ValItem>& items, const TrainConfig& config) {
  double loss = 0;
  int correct = 0;
  for (const ValItem& v : items) {
    Graph g(false);
    SampleLoss<float> s = sample_loss_graph<float>(g, model, v.sample->image, v.sample->label, v.glimpses, v.kappa,
                                                   config.lambda, config.masked_loss);
    loss += s.loss.value()[0];
    correct += kernels::argmax(s.logits.value()) == v.sample->label;
  }
  const double n = static_cast<double>(items.size());
  return {loss / n, correct / n};
}

void check_geometry(const Model& model, const std::vector<Sample>& samples) {
  const ModelConfig& c = model.config;
  for (const Sample& s : samples) {
    if (s.image.rank() != 3 || s.image.dim(0) != c.image_height || s.image.dim(1) != c.image_width ||
        s.image.dim(2) != c.channels) {
      throw DimensionError("dataset image shape " + Tensor::shape_string(s.image.shape()) + " does not match the model");
    }
    if (s.label < 0 || s.label >= c.num_classes) throw RangeError("dataset label outside [0, num_classes)");
  }
}

}  // namespace

FitResult fit(Model model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw ContractError("fit: empty training set");
  const int depth = model.config.depth;
  if (config.fixed_kappa > depth) throw UsageError("fit: fixed kappa exceeds the model depth");
  const GlimpseGrid grid(model.config);
  if (config.glimpses > grid.size()) throw UsageError("fit: more glimpses than the grid holds");

  std::vector<const Sample*> train, val;
  if (data.val.empty()) {
    std::vector<std::size_t> idx(data.train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng(mix_seed(config.seed, 0x5a11));
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    std::size_t n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(idx.size())));
    if (n_val == 0 && idx.size() > 1) n_val = 1;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val : train).push_back(&data.train[idx[i]]);
    std::sort(train.begin(), train.end());
  } else {
    for (const Sample& s : data.train) train.push_back(&s);
    for (const Sample& s : data.val) val.push_back(&s);
  }
  if (val.empty()) val = train;
  check_geometry(model, data.train);
  check_geometry(model, data.val);

  std::vector<ValItem> val_items;
  for (std::size_t i = 0; i < val.size(); ++i) {
    Rng r(mix_seed(config.seed, 0x7a10000 + i));
    const int kappa = config.fixed_kappa >= 0 ? config.fixed_kappa : sample_kappa(r, depth);
    val_items.push_back({val[i], sample_glimpses(r, grid, config.glimpses), kappa});
  }

  FitResult result;
  result.model = model;
  AdamW opt(config);
  Rng rng(mix_seed(config.seed, 0x7e41));
  int bad_epochs = 0;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = cosine_lr(config, epoch);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.kappa_draws.assign(static_cast<std::size_t>(depth + 1), 0);
    double loss_sum = 0;
    int batches = 0;
    std::vector<TrainExample> batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back({train[order[i]], sample_glimpses(rng, grid, config.glimpses)});
      StepResult s = train_step(model, opt, batch, rng, config, lr);
      ++log.kappa_draws[static_cast<std::size_t>(s.kappa)];
      loss_sum += s.loss.L;
      ++batches;
    }
    log.train_loss = loss_sum / batches;
    std::tie(log.val_loss, log.val_acc) = validate_model(model, val_items, config);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (result.best_epoch < 0 || log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = log.epoch;
      result.model = model;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

FitResult fit(const ModelConfig& mc, const DecoderConfig& dc, const Dataset& data, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  return fit(init_model(mc, dc, config.seed), data, config, on_epoch);
}

std::string format_train_log(const std::vector<EpochLog>& log, const std::string& header_comment) {
  std::ostringstream os;
  std::istringstream hc(header_comment);
  std::string line;
  while (std::getline(hc, line)) os << "# " << line << '\n';
  os << "epoch,train_loss,val_loss,val_acc,lr,kappa_draws\n";
  char buf[160];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.4f,%.6g,", e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr);
    os << buf;
    for (std::size_t k = 0; k < e.kappa_draws.size(); ++k) os << (k ? ";" : "") << e.kappa_draws[k];
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

EpisodeOptions EvalOptions::episode(std::size_t i) const {
  return {policy, steps, mix_seed(seed, 0xe0000 + i), cold_start, score};
}

EvalResult evaluate(const Model& model, std::span<const Sample> samples, const EvalOptions& options) {
  EvalResult r;
  r.samples = static_cast<int>(samples.size());
  r.gflops = episode_flops(ArchSpec::from(model.config), ArchSpec::from(model.decoder_config),
                           RegimeSpec::from(model.config, options.steps), options.kappa, CostMode::cached)
                 .gflops();
  if (samples.empty()) return r;
  std::vector<char> correct(samples.size(), 0);
  std::vector<double> rmse(samples.size(), -1.0);
  std::vector<int> all(static_cast<std::size_t>(model.config.grid_size()));
  std::iota(all.begin(), all.end(), 0);
  parallel_for(samples.size(), options.jobs, [&](std::size_t i) {
    const Sample& s = samples[i];
    EpisodeTrace t = run_episode(model, Split{options.kappa}, s.image, options.episode(i));
    const EpisodeStep& last = t.steps.back();
    correct[i] = last.pred == s.label;
    const std::vector<char> counted = counted_rows(model.config.grid_size(), t.observed, true);
    if (std::find(counted.begin(), counted.end(), 1) != counted.end()) {
      Graph g(false);
      rmse[i] = ad::masked_rmse(g.constant(last.reconstruction), extract_patches(s.image, model.config, all), counted)
                    .value()[0];
    }
  });
  int n_rmse = 0;
  double rmse_sum = 0, hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    hits += correct[i];
    if (rmse[i] >= 0) rmse_sum += rmse[i], ++n_rmse;
  }
  r.accuracy = hits / static_cast<double>(samples.size());
  r.rmse = n_rmse ? rmse_sum / n_rmse : 0.0;
  return r;
}

StepCurve step_curve_eval(const Model& model, std::span<const Sample> samples, const std::vector<int>& kappas,
                          const EvalOptions& options) {
  StepCurve curve;
  curve.kappas = kappas;
  for (int kappa : kappas) {
    std::vector<std::vector<char>> hit(samples.size());
    parallel_for(samples.size(), options.jobs, [&](std::size_t i) {
      EpisodeTrace t = run_episode(model, Split{kappa}, samples[i].image, options.episode(i));
      for (const EpisodeStep& s : t.steps) hit[i].push_back(s.pred == samples[i].label);
    });
    std::vector<double> acc(static_cast<std::size_t>(options.steps), 0.0);
    for (const auto& h : hit)
      for (std::size_t j = 0; j < h.size(); ++j) acc[j] += h[j];
    if (!samples.empty())
      for (double& a : acc) a /= static_cast<double>(samples.size());
    curve.accuracy.push_back(std::move(acc));
  }
  return curve;
}

double cross_policy_eval(const Model& model, std::span<const Sample> samples, int gather_kappa, int predict_kappa,
                         const EvalOptions& options) {
  Split{gather_kappa}.validate(model.config.depth);
  Split{predict_kappa}.validate(model.config.depth);
  if (samples.empty()) return 0.0;
  std::vector<char> correct(samples.size(), 0);
  parallel_for(samples.size(), options.jobs, [&](std::size_t i) {
    EpisodeTrace t = run_episode(model, Split{gather_kappa}, samples[i].image, options.episode(i));
    const Tensor logits = replay_glimpses(model, Split{predict_kappa}, samples[i].image, t.glimpses);
    correct[i] = kernels::argmax(logits) == samples[i].label;
  });
  double hits = 0;
  for (char c : correct) hits += c;
  return hits / static_cast<double>(samples.size());
}

std::vector<FixedVsRandomRow> fixed_vs_random(const ModelConfig& mc, const DecoderConfig& dc, const Dataset& data,
                                              const TrainConfig& config, const EvalOptions& eval_options) {
  const Model init = init_model(mc, dc, config.seed);
  std::vector<FixedVsRandomRow> rows;
  for (int k = 0; k <= mc.depth; ++k) {
    TrainConfig c = config;
    c.fixed_kappa = k;
    FitResult f = fit(init, data, c);
    EvalOptions e = eval_options;
    e.kappa = k;
    rows.push_back({"fixed", k, evaluate(f.model, data.test, e).accuracy});
  }
  TrainConfig c = config;
  c.fixed_kappa = -1;
  FitResult f = fit(init, data, c);
  for (int k = 0; k <= mc.depth; ++k) {
    EvalOptions e = eval_options;
    e.kappa = k;
    rows.push_back({"random", k, evaluate(f.model, data.test, e).accuracy});
  }
  return rows;
}

}  // namespace tore
