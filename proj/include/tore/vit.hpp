// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Vision Transformer building blocks: tokenizer, pre-norm blocks with
// recordable attention, prediction head.
//
// Every block is written once against the autograd tape (`*_graph`
// functions, templated on the scalar type). The value-level API below wraps
// them in a non-recording graph for inference.

#include <cmath>
#include <map>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "tore/autograd.hpp"
#include "tore/model.hpp"

namespace tore {

/// 2-D factorized sinusoidal encoding of token-grid `position` on a grid with
/// `grid_cols` columns. The first d/2 channels encode the row and the last
/// d/2 the column; each half is [sin(p·ω_0..ω_{m-1}), cos(p·ω_0..ω_{m-1})]
/// with m = d/4 and ω_i = 10000^(-i/m). Requires d % 4 == 0.
template <typename T>
BasicTensor<T> sinusoidal_pe(int position, int d, int grid_rows, int grid_cols) {
  if (d % 4 != 0) throw ContractError("sinusoidal_pe: embedding dim must be divisible by 4");
  if (position < 0 || position >= grid_rows * grid_cols) throw RangeError("sinusoidal_pe: position outside the grid");
  const int m = d / 4;
  const double coords[2] = {static_cast<double>(position / grid_cols), static_cast<double>(position % grid_cols)};
  BasicTensor<T> pe({d});
  for (int half = 0; half < 2; ++half) {
    const int base = half * (d / 2);
    for (int i = 0; i < m; ++i) {
      const double omega = std::pow(10000.0, -static_cast<double>(i) / m);
      const double a = coords[half] * omega;
      pe[static_cast<std::size_t>(base + i)] = static_cast<T>(std::sin(a));
      pe[static_cast<std::size_t>(base + m + i)] = static_cast<T>(std::cos(a));
    }
  }
  return pe;
}

/// [positions.size() × d] stack of encodings; memoized per thread.
template <typename T>
BasicTensor<T> pe_rows(std::span<const int> positions, int d, int grid_rows, int grid_cols) {
  thread_local std::map<std::tuple<int, int, int>, BasicTensor<T>> tables;
  auto key = std::make_tuple(d, grid_rows, grid_cols);
  auto it = tables.find(key);
  if (it == tables.end()) {
    BasicTensor<T> table({grid_rows * grid_cols, d});
    for (int p = 0; p < grid_rows * grid_cols; ++p) {
      auto row = sinusoidal_pe<T>(p, d, grid_rows, grid_cols);
      std::copy(row.data().begin(), row.data().end(), table.row(p).begin());
    }
    it = tables.emplace(key, std::move(table)).first;
  }
  BasicTensor<T> out({static_cast<int>(positions.size()), d});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || p >= grid_rows * grid_cols) throw RangeError("pe_rows: position outside the grid");
    auto src = it->second.row(p);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  return out;
}

/// Flattened pixels (row, column, channel order within each patch) of the
/// patches at `positions`: [positions.size() × patch_pixels]. `image` is
/// [height × width × channels].
template <typename T>
BasicTensor<T> extract_patches(const BasicTensor<T>& image, const ModelConfig& c, std::span<const int> positions) {
  if (image.rank() != 3 || image.dim(0) != c.image_height || image.dim(1) != c.image_width || image.dim(2) != c.channels) {
    throw DimensionError("extract_patches: image shape " + BasicTensor<T>::shape_string(image.shape()) +
                         " does not match the model geometry");
  }
  const int ps = c.patch_size;
  BasicTensor<T> out({static_cast<int>(positions.size()), c.patch_pixels()});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || p >= c.grid_size()) throw RangeError("extract_patches: position " + std::to_string(p) + " outside the grid");
    const int r0 = (p / c.grid_cols()) * ps, c0 = (p % c.grid_cols()) * ps;
    auto dst = out.row(static_cast<int>(i));
    std::size_t k = 0;
    for (int y = 0; y < ps; ++y)
      for (int x = 0; x < ps; ++x)
        for (int ch = 0; ch < c.channels; ++ch)
          dst[k++] = image[(static_cast<std::size_t>(r0 + y) * c.image_width + (c0 + x)) * c.channels + ch];
  }
  return out;
}

/// Inverse of extract_patches over the full grid: [grid_size × patch_pixels] -> image.
template <typename T>
BasicTensor<T> assemble_image(const BasicTensor<T>& patches, const ModelConfig& c) {
  if (patches.rows() != c.grid_size() || patches.cols() != c.patch_pixels()) {
    throw DimensionError("assemble_image: expected one row per grid position");
  }
  BasicTensor<T> image({c.image_height, c.image_width, c.channels});
  const int ps = c.patch_size;
  for (int p = 0; p < c.grid_size(); ++p) {
    const int r0 = (p / c.grid_cols()) * ps, c0 = (p % c.grid_cols()) * ps;
    auto src = patches.row(p);
    std::size_t k = 0;
    for (int y = 0; y < ps; ++y)
      for (int x = 0; x < ps; ++x)
        for (int ch = 0; ch < c.channels; ++ch)
          image[(static_cast<std::size_t>(r0 + y) * c.image_width + (c0 + x)) * c.channels + ch] = src[k++];
  }
  return image;
}

/// Patch embeddings plus positional encodings: [k × d].
template <typename T>
Var<T> patch_tokens_graph(BasicGraph<T>& g, const BasicModel<T>& m, const BasicTensor<T>& patch_pixels,
                          std::span<const int> positions) {
  const ModelConfig& c = m.config;
  if (patch_pixels.rows() != static_cast<int>(positions.size()) || patch_pixels.cols() != c.patch_pixels()) {
    throw DimensionError("tokenize: pixel rows must match the listed positions");
  }
  Var<T> px = g.constant(patch_pixels.reshaped({patch_pixels.rows(), patch_pixels.cols()}));
  Var<T> emb = ad::linear(px, g.param(m.encoder.patch_weight), g.param(m.encoder.patch_bias));
  Var<T> pe = g.constant(pe_rows<T>(positions, c.embed_dim, c.grid_rows(), c.grid_cols()));
  return ad::add(emb, pe);
}

/// [1 + k × d]: a fresh copy of the learned class token followed by the patch tokens.
template <typename T>
Var<T> tokenize_graph(BasicGraph<T>& g, const BasicModel<T>& m, const BasicTensor<T>& patch_pixels,
                      std::span<const int> positions) {
  Var<T> cls = g.param(m.encoder.cls);
  if (positions.empty()) return cls;
  return ad::concat_rows<T>({cls, patch_tokens_graph(g, m, patch_pixels, positions)});
}

/// Pre-norm transformer block: x + MHSA(LN(x)), then + MLP(LN(·)).
/// When `attention` is non-null the per-head softmax matrices are appended.
template <typename T>
Var<T> block_graph(BasicGraph<T>& g, const BlockWeights<T>& w, Var<T> x, int num_heads, T eps,
                   std::vector<BasicTensor<T>>* attention = nullptr) {
  const int d = x.value().cols();
  const int hd = d / num_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  Var<T> h = ad::layer_norm(x, g.param(w.ln1_gain), g.param(w.ln1_bias), eps);
  Var<T> qkv = ad::linear(h, g.param(w.qkv_weight), g.param(w.qkv_bias));
  std::vector<Var<T>> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  for (int i = 0; i < num_heads; ++i) {
    Var<T> q = ad::slice_cols(qkv, i * hd, hd);
    Var<T> k = ad::slice_cols(qkv, d + i * hd, hd);
    Var<T> v = ad::slice_cols(qkv, 2 * d + i * hd, hd);
    Var<T> a = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
    if (attention) attention->push_back(a.value());
    heads.push_back(ad::matmul(a, v));
  }
  Var<T> att = num_heads == 1 ? heads.front() : ad::concat_cols(heads);
  x = ad::add(x, ad::linear(att, g.param(w.proj_weight), g.param(w.proj_bias)));
  Var<T> h2 = ad::layer_norm(x, g.param(w.ln2_gain), g.param(w.ln2_bias), eps);
  Var<T> mlp = ad::linear(ad::gelu(ad::linear(h2, g.param(w.fc1_weight), g.param(w.fc1_bias))),
                          g.param(w.fc2_weight), g.param(w.fc2_bias));
  return ad::add(x, mlp);
}

/// Applies encoder blocks [first, last) (0-based) to a token matrix.
template <typename T>
Var<T> encoder_blocks_graph(BasicGraph<T>& g, const BasicModel<T>& m, Var<T> x, int first, int last,
                            std::vector<std::vector<BasicTensor<T>>>* attention = nullptr) {
  const T eps = static_cast<T>(m.config.layer_norm_eps);
  for (int i = first; i < last; ++i) {
    std::vector<BasicTensor<T>>* rec = nullptr;
    if (attention) rec = &attention->emplace_back();
    x = block_graph(g, m.encoder.blocks[static_cast<std::size_t>(i)], x, m.config.num_heads, eps, rec);
  }
  return x;
}

/// Layer norm then an affine map to class logits; `cls` is [1×d].
template <typename T>
Var<T> head_graph(BasicGraph<T>& g, const BasicModel<T>& m, Var<T> cls) {
  const T eps = static_cast<T>(m.config.layer_norm_eps);
  Var<T> h = ad::layer_norm(cls, g.param(m.encoder.head_norm_gain), g.param(m.encoder.head_norm_bias), eps);
  return ad::linear(h, g.param(m.encoder.head_weight), g.param(m.encoder.head_bias));
}

/// Encoder output as handed to the decoder (final norm when enabled).
template <typename T>
Var<T> final_embeddings_graph(BasicGraph<T>& g, const BasicModel<T>& m, Var<T> x) {
  if (!m.config.final_norm) return x;
  return ad::layer_norm(x, g.param(m.encoder.norm_gain), g.param(m.encoder.norm_bias),
                        static_cast<T>(m.config.layer_norm_eps));
}

// ---------------------------------------------------------------------------
// Value-level API (inference, float)

/// Class token plus position-tagged patch tokens.
struct TokenSet {
  Tensor cls;                   // [d]
  std::vector<int> positions;   // token-grid indices, unique
  Tensor patches;               // [positions.size() × d]; empty when there are none

  int size() const noexcept { return 1 + static_cast<int>(positions.size()); }

  /// [size() × d], class token first.
  Tensor matrix() const;
  static TokenSet from_matrix(const Tensor& m, std::vector<int> positions);
  /// Throws RangeError/DuplicatePositionError on bad positions.
  void validate(int grid_size) const;
};

/// Per-head row-stochastic attention matrices of one block.
struct AttentionRecord {
  std::vector<Tensor> heads;
};

/// Tokenizer: linear patch embedding plus positional encoding; the class
/// token is copied from the learned parameter without encoding.
TokenSet tokenize(const Model& model, const Tensor& patch_pixels, std::span<const int> positions);

/// Encoder block `block_index` in [1, depth].
std::pair<TokenSet, AttentionRecord> block_forward(const Model& model, const TokenSet& tokens, int block_index);

/// `cls` of length d -> num_classes logits.
Tensor head_forward(const Model& model, const Tensor& cls);

struct ForwardResult {
  Tensor logits;
  TokenSet final_embeddings;
  std::vector<AttentionRecord> attention;
};

/// All blocks then the head on the class token.
ForwardResult full_forward(const Model& model, const TokenSet& tokens);

}  // namespace tore
