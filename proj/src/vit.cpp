// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/vit.hpp"

#include <algorithm>
#include <unordered_set>

namespace tore {

Tensor TokenSet::matrix() const {
  if (cls.empty()) throw ContractError("token set: missing class token");
  const int d = static_cast<int>(cls.size());
  std::vector<float> vals(cls.data().begin(), cls.data().end());
  if (!positions.empty()) {
    if (patches.rows() != static_cast<int>(positions.size()) || patches.cols() != d) {
      throw DimensionError("token set: patch matrix does not match positions");
    }
    vals.insert(vals.end(), patches.data().begin(), patches.data().end());
  }
  return Tensor({size(), d}, std::move(vals));
}

TokenSet TokenSet::from_matrix(const Tensor& m, std::vector<int> positions) {
  if (m.rows() != 1 + static_cast<int>(positions.size())) {
    throw DimensionError("token set: matrix rows must be 1 + number of positions");
  }
  const int d = m.cols();
  TokenSet t;
  t.cls = Tensor({d}, std::vector<float>(m.row(0).begin(), m.row(0).end()));
  if (!positions.empty()) {
    t.patches = Tensor({static_cast<int>(positions.size()), d},
                       std::vector<float>(m.data().begin() + d, m.data().end()));
  }
  t.positions = std::move(positions);
  return t;
}

void TokenSet::validate(int grid_size) const {
  std::unordered_set<int> seen;
  for (int p : positions) {
    if (p < 0 || p >= grid_size) throw RangeError("token set: position " + std::to_string(p) + " outside the grid");
    if (!seen.insert(p).second) throw DuplicatePositionError("token set: duplicate position " + std::to_string(p));
  }
}

TokenSet tokenize(const Model& model, const Tensor& patch_pixels, std::span<const int> positions) {
  for (int p : positions) {
    if (p < 0 || p >= model.config.grid_size()) {
      throw RangeError("tokenize: position " + std::to_string(p) + " outside the grid");
    }
  }
  Graph g(false);
  Var<float> x = tokenize_graph(g, model, patch_pixels, positions);
  TokenSet t = TokenSet::from_matrix(x.value(), std::vector<int>(positions.begin(), positions.end()));
  t.validate(model.config.grid_size());
  return t;
}

std::pair<TokenSet, AttentionRecord> block_forward(const Model& model, const TokenSet& tokens, int block_index) {
  if (block_index < 1 || block_index > model.config.depth) {
    throw RangeError("block_forward: block index " + std::to_string(block_index) + " outside [1, depth]");
  }
  if (tokens.cls.empty()) throw ContractError("block_forward: token set has no class token");
  Graph g(false);
  AttentionRecord rec;
  Var<float> x = g.constant(tokens.matrix());
  x = block_graph(g, model.encoder.blocks[static_cast<std::size_t>(block_index - 1)], x, model.config.num_heads,
                  model.config.layer_norm_eps, &rec.heads);
  return {TokenSet::from_matrix(x.value(), tokens.positions), std::move(rec)};
}

Tensor head_forward(const Model& model, const Tensor& cls) {
  if (static_cast<int>(cls.size()) != model.config.embed_dim) throw DimensionError("head_forward: cls length must be d");
  Graph g(false);
  Var<float> logits = head_graph(g, model, g.constant(cls.reshaped({1, model.config.embed_dim})));
  return logits.value().reshaped({model.config.num_classes});
}

ForwardResult full_forward(const Model& model, const TokenSet& tokens) {
  if (tokens.cls.empty()) throw ContractError("full_forward: token set has no class token");
  Graph g(false);
  std::vector<std::vector<Tensor>> att;
  Var<float> x = g.constant(tokens.matrix());
  x = encoder_blocks_graph(g, model, x, 0, model.config.depth, &att);
  Var<float> logits = head_graph(g, model, ad::slice_rows(x, 0, 1));
  Var<float> fin = final_embeddings_graph(g, model, x);
  ForwardResult r;
  r.logits = logits.value().reshaped({model.config.num_classes});
  r.final_embeddings = TokenSet::from_matrix(fin.value(), tokens.positions);
  for (auto& heads : att) r.attention.push_back(AttentionRecord{std::move(heads)});
  return r;
}

}  // namespace tore
