// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tore {

GlimpseGrid::GlimpseGrid(int token_rows, int token_cols, int span)
    : token_rows_(token_rows), token_cols_(token_cols), span_(span) {
  if (span <= 0 || token_rows <= 0 || token_cols <= 0 || token_rows % span || token_cols % span) {
    throw ContractError("glimpse grid: token grid " + std::to_string(token_rows) + "x" + std::to_string(token_cols) +
                        " cannot be tiled by " + std::to_string(span) + "x" + std::to_string(span) + " glimpses");
  }
  rows_ = token_rows / span;
  cols_ = token_cols / span;
}

std::vector<int> GlimpseGrid::positions(int index) const {
  if (index < 0 || index >= size()) throw RangeError("glimpse index " + std::to_string(index) + " outside the grid");
  const int r0 = (index / cols_) * span_, c0 = (index % cols_) * span_;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(span_ * span_));
  for (int y = 0; y < span_; ++y)
    for (int x = 0; x < span_; ++x) out.push_back((r0 + y) * token_cols_ + c0 + x);
  return out;
}

int GlimpseGrid::glimpse_of(int position) const {
  if (position < 0 || position >= token_rows_ * token_cols_) throw RangeError("glimpse_of: position outside the grid");
  return (position / token_cols_ / span_) * cols_ + (position % token_cols_) / span_;
}

int GlimpseGrid::center() const {
  const double cy = (rows_ - 1) / 2.0, cx = (cols_ - 1) / 2.0;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i) {
    const double dy = i / cols_ - cy, dx = i % cols_ - cx;
    const double dist = dy * dy + dx * dx;
    if (dist < best_d) best_d = dist, best = i;
  }
  return best;
}

Tensor entropy_map(const std::vector<Tensor>& attention) {
  if (attention.empty()) throw ContractError("entropy_map: no attention heads");
  const int n = attention.front().rows();
  std::vector<double> h(static_cast<std::size_t>(n), 0.0);
  for (const Tensor& a : attention) {
    kernels::require_matrix(a, "entropy_map");
    if (a.rows() != n) throw DimensionError("entropy_map: heads disagree on the token count");
    const double bound = std::log2(static_cast<double>(a.cols()));
    for (int i = 0; i < n; ++i) {
      double sum = 0, e = 0;
      for (float v : a.row(i)) {
        if (!(v >= 0.0f)) throw ContractError("entropy_map: negative or non-finite attention weight");
        sum += v;
        if (v > 0.0f) e -= static_cast<double>(v) * std::log2(static_cast<double>(v));
      }
      if (std::abs(sum - 1.0) > 1e-4) throw ContractError("entropy_map: attention row " + std::to_string(i) + " is not stochastic");
      h[static_cast<std::size_t>(i)] += std::clamp(e, 0.0, bound);
    }
  }
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(h[static_cast<std::size_t>(i)]);
  return out;
}

const char* to_string(Policy p) { return p == Policy::ame ? "ame" : "random"; }

Policy parse_policy(const std::string& s) {
  if (s == "ame") return Policy::ame;
  if (s == "random") return Policy::random;
  throw UsageError("unknown policy '" + s + "' (expected ame|random)");
}

ColdStart parse_cold_start(const std::string& s) {
  if (s == "random") return ColdStart::random;
  if (s == "center") return ColdStart::center;
  throw UsageError("unknown cold start '" + s + "' (expected random|center)");
}

GlimpseScore parse_glimpse_score(const std::string& s) {
  if (s == "sum") return GlimpseScore::sum;
  if (s == "max") return GlimpseScore::max;
  throw UsageError("unknown glimpse score '" + s + "' (expected sum|max)");
}

bool PolicyState::is_chosen(int glimpse) const { return std::find(chosen.begin(), chosen.end(), glimpse) != chosen.end(); }

int ame_select(const Tensor& entropy, const PolicyState& state, const GlimpseGrid& grid, GlimpseScore score) {
  if (static_cast<int>(entropy.size()) != grid.token_rows() * grid.token_cols()) {
    throw DimensionError("ame_select: entropy map does not match the token grid");
  }
  Tensor h = entropy;
  for (int g : state.chosen)
    for (int p : grid.positions(g)) h[static_cast<std::size_t>(p)] = 0.0f;
  int best = -1;
  float best_score = 0;
  for (int g = 0; g < grid.size(); ++g) {
    if (state.is_chosen(g)) continue;
    float s = 0;
    for (int p : grid.positions(g)) {
      const float v = h[static_cast<std::size_t>(p)];
      s = score == GlimpseScore::sum ? s + v : std::max(s, v);
    }
    if (best < 0 || s > best_score) best = g, best_score = s;
  }
  if (best < 0) throw ExhaustionError("ame_select: every glimpse has already been chosen");
  return best;
}

int random_select(PolicyState& state, const GlimpseGrid& grid) {
  std::vector<int> open;
  for (int g = 0; g < grid.size(); ++g)
    if (!state.is_chosen(g)) open.push_back(g);
  if (open.empty()) throw ExhaustionError("random_select: every glimpse has already been chosen");
  return open[static_cast<std::size_t>(state.rng.uniform_int(0, static_cast<int>(open.size()) - 1))];
}

float confidence(const Tensor& logits) {
  const Tensor p = kernels::softmax_rows(logits.reshaped({1, static_cast<int>(logits.size())}));
  return p[static_cast<std::size_t>(kernels::argmax(p))];
}

EpisodeTrace run_episode(const Model& model, Split split, const Tensor& image, const EpisodeOptions& options) {
  const GlimpseGrid grid(model.config);
  if (options.steps < 1 || options.steps > grid.size()) {
    throw RangeError("run_episode: steps must lie in [1, " + std::to_string(grid.size()) + "]");
  }
  const FlopReport cost = episode_flops(ArchSpec::from(model.config), ArchSpec::from(model.decoder_config),
                                        RegimeSpec::from(model.config, options.steps), split.kappa, CostMode::cached);
  ToreSession session(model, split);
  PolicyState state(mix_seed(options.seed, 0x9e11));
  EpisodeTrace trace;
  Tensor entropy;
  for (int j = 1; j <= options.steps; ++j) {
    int g;
    if (options.policy == Policy::random) {
      g = random_select(state, grid);
    } else if (j == 1) {
      g = options.cold_start == ColdStart::center ? grid.center() : random_select(state, grid);
    } else {
      g = ame_select(entropy, state, grid, options.score);
    }
    state.chosen.push_back(g);
    Glimpse gl = observe(image, model.config, grid.positions(g), g);
    AggregateResult agg = session.observe(gl);
    DecodeResult dec = decode(model, agg.final_embeddings);
    entropy = entropy_map(dec.attention);

    EpisodeStep s;
    s.glimpse = g;
    s.pred = kernels::argmax(agg.logits);
    s.conf = confidence(agg.logits);
    s.logits = std::move(agg.logits);
    s.entropy = entropy;
    s.reconstruction = std::move(dec.reconstruction);
    s.gflops_cum = cost.cumulative_gflops(j);
    trace.steps.push_back(std::move(s));
    trace.glimpses.push_back(g);
    trace.observed.insert(trace.observed.end(), gl.positions.begin(), gl.positions.end());
  }
  trace.extraction_calls = session.extraction_calls();
  return trace;
}

Tensor replay_glimpses(const Model& model, Split split, const Tensor& image, const std::vector<int>& glimpses) {
  if (glimpses.empty()) throw ContractError("replay_glimpses: empty glimpse sequence");
  const GlimpseGrid grid(model.config);
  ToreSession session(model, split);
  AggregateResult last;
  for (int g : glimpses) last = session.observe(observe(image, model.config, grid.positions(g), g));
  return last.logits;
}

}  // namespace tore
