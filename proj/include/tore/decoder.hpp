// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Lightweight reconstruction decoder. Observed-token embeddings are projected
// to decoder width, a single shared mask token fills every unobserved grid
// position, 2-D sinusoidal encodings are added everywhere, and a per-position
// linear head emits patch pixels. The class token never enters the decoder.

#include <span>
#include <vector>

#include "tore/vit.hpp"

namespace tore {

/// [grid_size × decoder d] decoder input, with PE added. `observed` rows are
/// in the order of `positions`.
template <typename T>
Var<T> decoder_input_graph(BasicGraph<T>& g, const BasicModel<T>& m, Var<T> observed, std::span<const int> positions) {
  const ModelConfig& c = m.config;
  const int grid = c.grid_size();
  std::vector<int> slots(static_cast<std::size_t>(grid), -1);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || p >= grid) throw RangeError("decode: embedding for position " + std::to_string(p) + " outside the grid");
    if (slots[static_cast<std::size_t>(p)] >= 0) throw DuplicatePositionError("decode: duplicate position " + std::to_string(p));
    slots[static_cast<std::size_t>(p)] = static_cast<int>(i);
  }
  Var<T> mask = g.param(m.decoder.mask_token);
  Var<T> tokens;
  if (positions.empty()) {
    std::vector<Var<T>> rows(static_cast<std::size_t>(grid), mask);
    tokens = ad::concat_rows(rows);
  } else {
    Var<T> proj = ad::linear(observed, g.param(m.decoder.embed_weight), g.param(m.decoder.embed_bias));
    tokens = ad::assemble_rows(proj, mask, slots);
  }
  std::vector<int> all(static_cast<std::size_t>(grid));
  for (int p = 0; p < grid; ++p) all[static_cast<std::size_t>(p)] = p;
  return ad::add(tokens, g.constant(pe_rows<T>(all, m.decoder_config.embed_dim, c.grid_rows(), c.grid_cols())));
}

/// Reconstruction [grid_size × patch_pixels]. The last block's per-head
/// attention ([grid_size × grid_size] each) is stored in `last_attention`
/// when non-null.
template <typename T>
Var<T> decoder_graph(BasicGraph<T>& g, const BasicModel<T>& m, Var<T> observed, std::span<const int> positions,
                     std::vector<BasicTensor<T>>* last_attention = nullptr) {
  const T eps = static_cast<T>(m.config.layer_norm_eps);
  Var<T> x = decoder_input_graph(g, m, observed, positions);
  const auto depth = m.decoder.blocks.size();
  for (std::size_t i = 0; i < depth; ++i) {
    x = block_graph(g, m.decoder.blocks[i], x, m.decoder_config.num_heads, eps,
                    i + 1 == depth ? last_attention : nullptr);
  }
  x = ad::layer_norm(x, g.param(m.decoder.norm_gain), g.param(m.decoder.norm_bias), eps);
  return ad::linear(x, g.param(m.decoder.pred_weight), g.param(m.decoder.pred_bias));
}

struct DecodeResult {
  Tensor reconstruction;          // [grid_size × patch_pixels]
  std::vector<Tensor> attention;  // per head, [grid_size × grid_size]
};

/// Runs the decoder on the patch tokens of `final_embeddings` (class token ignored).
DecodeResult decode(const Model& model, const TokenSet& final_embeddings);

struct DecoderInput {
  Tensor tokens;  // [grid_size × decoder d], PE included
  int projected = 0;
  int masked = 0;
};

/// The assembled decoder input, exposed for inspection.
DecoderInput assemble_decoder_input(const Model& model, const TokenSet& final_embeddings);

}  // namespace tore
