// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Extractor/aggregator split with a midway-token cache.
//
// The extractor (tokenizer + blocks 1..κ) runs once per glimpse on that
// glimpse's tokens and its own copy of the class token. The cache keeps the
// running mean of the extracted class tokens and the union of patch tokens;
// the aggregator (blocks κ+1..n + head) runs over the whole cache each step.

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "tore/decoder.hpp"
#include "tore/vit.hpp"

namespace tore {

/// Number of encoder blocks assigned to the extractor, in [0, depth].
struct Split {
  int kappa = 0;

  void validate(int depth) const {
    if (kappa < 0 || kappa > depth) {
      throw RangeError("split: kappa " + std::to_string(kappa) + " outside [0, " + std::to_string(depth) + "]");
    }
  }
};

/// One observation: token-grid positions and their flattened patch pixels.
template <typename T>
struct BasicGlimpse {
  int index = -1;
  std::vector<int> positions;
  BasicTensor<T> pixels;  // [positions.size() × patch_pixels]

  template <typename U>
  BasicGlimpse<U> cast() const {
    return {index, positions, pixels.template cast<U>()};
  }
};

using Glimpse = BasicGlimpse<float>;

/// Cuts the patches at `positions` out of `image` ([H × W × C]).
template <typename T>
BasicGlimpse<T> observe(const BasicTensor<T>& image, const ModelConfig& config, std::vector<int> positions,
                        int index = -1) {
  BasicGlimpse<T> g;
  g.index = index;
  g.pixels = extract_patches(image, config, positions);
  g.positions = std::move(positions);
  return g;
}

/// Running mean of extracted class tokens plus the union of patch tokens.
class MidwayCache {
 public:
  explicit MidwayCache(int embed_dim) : d_(embed_dim), c_mean_({embed_dim}) {}

  int count() const noexcept { return count_; }
  int embed_dim() const noexcept { return d_; }
  const Tensor& c_mean() const noexcept { return c_mean_; }
  const std::vector<int>& positions() const noexcept { return positions_; }
  bool contains(int position) const { return seen_.count(position) != 0; }

  /// [positions().size() × d]; empty tensor when no patch tokens are cached.
  Tensor patches() const;

  /// Cached tokens as a token set (class token = c_mean).
  TokenSet tokens() const;

  /// Back to j = 0, c_mean = 0, no patch tokens.
  void reset();

  /// c_mean <- c/j + (j-1)/j · c_mean with j the new count; patch tokens are
  /// appended. Throws DuplicatePositionError if a position is already cached.
  void update(const TokenSet& midway);

 private:
  int d_;
  int count_ = 0;
  Tensor c_mean_;
  std::vector<int> positions_;
  std::vector<float> patch_values_;
  std::unordered_set<int> seen_;
};

inline void cache_update(MidwayCache& cache, const TokenSet& midway) { cache.update(midway); }

/// Tokenize `glimpse` and apply blocks 1..κ to its tokens only.
TokenSet extract(const Model& model, const Glimpse& glimpse, Split split);

struct AggregateResult {
  Tensor logits;                   // [num_classes]
  TokenSet final_embeddings;       // after the last block (and final norm when enabled)
  AttentionRecord last_attention;  // last aggregator block; empty when κ = n
};

/// Blocks κ+1..n and the head over the cached tokens. The cache is not modified.
AggregateResult aggregate(const Model& model, const MidwayCache& cache, Split split);

/// Recomputes the prediction from scratch: extract every glimpse, average the
/// class tokens, take the union of patch tokens, run the aggregator.
AggregateResult tore_forward_direct(const Model& model, std::span<const Glimpse> glimpses, Split split);

/// One exploration episode's engine state: cache plus an extraction counter.
class ToreSession {
 public:
  ToreSession(const Model& model, Split split);

  /// extract -> cache_update -> aggregate.
  AggregateResult observe(const Glimpse& glimpse);

  const MidwayCache& cache() const noexcept { return cache_; }
  int extraction_calls() const noexcept { return extraction_calls_; }
  Split split() const noexcept { return split_; }
  void reset();

 private:
  const Model* model_;
  Split split_;
  MidwayCache cache_;
  int extraction_calls_ = 0;
};

/// Differentiable single-pass forward over all glimpses (training path).
template <typename T>
struct ToreGraphOutput {
  Var<T> logits;            // [1 × num_classes]
  Var<T> final_patches;     // [k × d], input to the decoder
  std::vector<int> positions;
};

template <typename T>
ToreGraphOutput<T> tore_forward_graph(BasicGraph<T>& g, const BasicModel<T>& m, std::span<const BasicGlimpse<T>> glimpses,
                                      int kappa) {
  if (glimpses.empty()) throw ContractError("tore forward: at least one glimpse is required");
  Split{kappa}.validate(m.config.depth);
  std::unordered_set<int> seen;
  std::vector<Var<T>> cls_rows, patch_parts;
  ToreGraphOutput<T> out;
  for (const auto& gl : glimpses) {
    for (int p : gl.positions) {
      if (p < 0 || p >= m.config.grid_size()) throw RangeError("tore forward: position outside the grid");
      if (!seen.insert(p).second) throw DuplicatePositionError("tore forward: glimpses overlap at position " + std::to_string(p));
    }
    Var<T> x = tokenize_graph(g, m, gl.pixels, gl.positions);
    x = encoder_blocks_graph(g, m, x, 0, kappa);
    cls_rows.push_back(ad::slice_rows(x, 0, 1));
    if (!gl.positions.empty()) {
      patch_parts.push_back(ad::slice_rows(x, 1, static_cast<int>(gl.positions.size())));
      out.positions.insert(out.positions.end(), gl.positions.begin(), gl.positions.end());
    }
  }
  std::vector<Var<T>> rows{ad::mean_rows(cls_rows.size() == 1 ? cls_rows.front() : ad::concat_rows(cls_rows))};
  rows.insert(rows.end(), patch_parts.begin(), patch_parts.end());
  Var<T> x = rows.size() == 1 ? rows.front() : ad::concat_rows(rows);
  x = encoder_blocks_graph(g, m, x, kappa, m.config.depth);
  out.logits = head_graph(g, m, ad::slice_rows(x, 0, 1));
  Var<T> fin = final_embeddings_graph(g, m, x);
  if (!out.positions.empty()) out.final_patches = ad::slice_rows(fin, 1, static_cast<int>(out.positions.size()));
  return out;
}

}  // namespace tore
