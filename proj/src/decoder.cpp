// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/decoder.hpp"

namespace tore {

namespace {

Var<float> observed_rows(Graph& g, const Model& model, const TokenSet& t) {
  if (t.positions.empty()) return g.constant(Tensor({1, model.config.embed_dim}));
  if (t.patches.cols() != model.config.embed_dim) throw DimensionError("decode: embedding width must equal d");
  return g.constant(t.patches);
}

}  // namespace

DecodeResult decode(const Model& model, const TokenSet& final_embeddings) {
  Graph g(false);
  DecodeResult r;
  Var<float> rec = decoder_graph(g, model, observed_rows(g, model, final_embeddings), final_embeddings.positions,
                                 &r.attention);
  r.reconstruction = rec.value();
  return r;
}

DecoderInput assemble_decoder_input(const Model& model, const TokenSet& final_embeddings) {
  Graph g(false);
  DecoderInput in;
  in.tokens = decoder_input_graph(g, model, observed_rows(g, model, final_embeddings), final_embeddings.positions).value();
  in.projected = static_cast<int>(final_embeddings.positions.size());
  in.masked = model.config.grid_size() - in.projected;
  return in;
}

}  // namespace tore
