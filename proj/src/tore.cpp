// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/tore.hpp"

namespace tore {

Tensor MidwayCache::patches() const {
  if (positions_.empty()) return Tensor();
  return Tensor({static_cast<int>(positions_.size()), d_}, patch_values_);
}

TokenSet MidwayCache::tokens() const {
  TokenSet t;
  t.cls = c_mean_;
  t.positions = positions_;
  t.patches = patches();
  return t;
}

void MidwayCache::reset() {
  count_ = 0;
  c_mean_ = Tensor({d_});
  positions_.clear();
  patch_values_.clear();
  seen_.clear();
}

void MidwayCache::update(const TokenSet& midway) {
  if (static_cast<int>(midway.cls.size()) != d_) throw DimensionError("cache_update: class token width must equal d");
  std::unordered_set<int> incoming;
  for (int p : midway.positions) {
    if (seen_.count(p) || !incoming.insert(p).second) {
      throw DuplicatePositionError("cache_update: position " + std::to_string(p) + " is already cached");
    }
  }
  const int j = count_ + 1;
  const float w_new = 1.0f / static_cast<float>(j);
  const float w_old = static_cast<float>(j - 1) / static_cast<float>(j);
  for (std::size_t i = 0; i < c_mean_.size(); ++i) c_mean_[i] = w_new * midway.cls[i] + w_old * c_mean_[i];
  for (int p : midway.positions) {
    positions_.push_back(p);
    seen_.insert(p);
  }
  if (!midway.positions.empty()) {
    patch_values_.insert(patch_values_.end(), midway.patches.data().begin(), midway.patches.data().end());
  }
  count_ = j;
}

TokenSet extract(const Model& model, const Glimpse& glimpse, Split split) {
  split.validate(model.config.depth);
  for (int p : glimpse.positions) {
    if (p < 0 || p >= model.config.grid_size()) throw RangeError("extract: position " + std::to_string(p) + " outside the grid");
  }
  Graph g(false);
  Var<float> x = tokenize_graph(g, model, glimpse.pixels, glimpse.positions);
  x = encoder_blocks_graph(g, model, x, 0, split.kappa);
  TokenSet t = TokenSet::from_matrix(x.value(), glimpse.positions);
  t.validate(model.config.grid_size());
  return t;
}

namespace {

AggregateResult run_aggregator(const Model& model, const TokenSet& tokens, Split split) {
  Graph g(false);
  std::vector<std::vector<Tensor>> att;
  Var<float> x = g.constant(tokens.matrix());
  x = encoder_blocks_graph(g, model, x, split.kappa, model.config.depth, &att);
  AggregateResult r;
  r.logits = head_graph(g, model, ad::slice_rows(x, 0, 1)).value().reshaped({model.config.num_classes});
  r.final_embeddings = TokenSet::from_matrix(final_embeddings_graph(g, model, x).value(), tokens.positions);
  if (!att.empty()) r.last_attention.heads = std::move(att.back());
  return r;
}

}  // namespace

AggregateResult aggregate(const Model& model, const MidwayCache& cache, Split split) {
  split.validate(model.config.depth);
  if (cache.count() < 1) throw ContractError("aggregate: cache is empty");
  return run_aggregator(model, cache.tokens(), split);
}

AggregateResult tore_forward_direct(const Model& model, std::span<const Glimpse> glimpses, Split split) {
  split.validate(model.config.depth);
  if (glimpses.empty()) throw ContractError("tore_forward_direct: no glimpses");
  const int d = model.config.embed_dim;
  std::vector<TokenSet> midway;
  std::unordered_set<int> seen;
  for (const Glimpse& gl : glimpses) {
    for (int p : gl.positions) {
      if (!seen.insert(p).second) throw DuplicatePositionError("tore_forward_direct: glimpses overlap at " + std::to_string(p));
    }
    midway.push_back(extract(model, gl, split));
  }
  TokenSet combined;
  combined.cls = Tensor({d});
  std::vector<float> patch_vals;
  for (const TokenSet& t : midway) {
    for (int i = 0; i < d; ++i) combined.cls[static_cast<std::size_t>(i)] += t.cls[static_cast<std::size_t>(i)];
    combined.positions.insert(combined.positions.end(), t.positions.begin(), t.positions.end());
    if (!t.positions.empty()) patch_vals.insert(patch_vals.end(), t.patches.data().begin(), t.patches.data().end());
  }
  for (auto& v : combined.cls.data()) v /= static_cast<float>(midway.size());
  if (!combined.positions.empty()) combined.patches = Tensor({static_cast<int>(combined.positions.size()), d}, std::move(patch_vals));
  return run_aggregator(model, combined, split);
}

ToreSession::ToreSession(const Model& model, Split split)
    : model_(&model), split_(split), cache_(model.config.embed_dim) {
  split.validate(model.config.depth);
}

AggregateResult ToreSession::observe(const Glimpse& glimpse) {
  for (int p : glimpse.positions) {
    if (cache_.contains(p)) throw DuplicatePositionError("observe: glimpse overlaps cached position " + std::to_string(p));
  }
  TokenSet midway = extract(*model_, glimpse, split_);
  ++extraction_calls_;
  cache_.update(midway);
  return aggregate(*model_, cache_, split_);
}

void ToreSession::reset() {
  cache_.reset();
  extraction_calls_ = 0;
}

}  // namespace tore
