// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tore/autograd.hpp"

namespace tore {

/// Encoder architecture and input geometry.
struct ModelConfig {
  int depth = 12;
  int embed_dim = 768;
  int num_heads = 12;
  int mlp_ratio = 4;
  int patch_size = 16;
  int image_height = 128;
  int image_width = 256;
  int channels = 3;
  int num_classes = 26;
  /// Apply the encoder's final layer norm to the embeddings handed to the decoder.
  bool final_norm = true;
  float layer_norm_eps = 1e-6f;

  int grid_rows() const noexcept { return image_height / patch_size; }
  int grid_cols() const noexcept { return image_width / patch_size; }
  int grid_size() const noexcept { return grid_rows() * grid_cols(); }
  int patch_pixels() const noexcept { return patch_size * patch_size * channels; }
  int head_dim() const noexcept { return embed_dim / num_heads; }

  /// Throws ContractError on inconsistent geometry.
  void validate() const;
};

/// Reconstruction decoder; one block, four heads, 128 wide by default.
struct DecoderConfig {
  int depth = 1;
  int num_heads = 4;
  int embed_dim = 128;
  int mlp_ratio = 4;

  void validate() const;
};

template <typename T>
struct BlockWeights {
  Parameter<T> ln1_gain, ln1_bias;
  Parameter<T> qkv_weight, qkv_bias;
  Parameter<T> proj_weight, proj_bias;
  Parameter<T> ln2_gain, ln2_bias;
  Parameter<T> fc1_weight, fc1_bias;
  Parameter<T> fc2_weight, fc2_bias;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(self.ln1_gain), f(self.ln1_bias), f(self.qkv_weight), f(self.qkv_bias), f(self.proj_weight), f(self.proj_bias);
    f(self.ln2_gain), f(self.ln2_bias), f(self.fc1_weight), f(self.fc1_bias), f(self.fc2_weight), f(self.fc2_bias);
  }
};

template <typename T>
struct EncoderWeights {
  Parameter<T> patch_weight, patch_bias;
  Parameter<T> cls;  // [1×d]
  std::vector<BlockWeights<T>> blocks;
  Parameter<T> norm_gain, norm_bias;
  Parameter<T> head_norm_gain, head_norm_bias;
  Parameter<T> head_weight, head_bias;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(self.patch_weight), f(self.patch_bias), f(self.cls);
    for (auto& b : self.blocks) BlockWeights<T>::visit(b, f);
    f(self.norm_gain), f(self.norm_bias);
    f(self.head_norm_gain), f(self.head_norm_bias), f(self.head_weight), f(self.head_bias);
  }
};

template <typename T>
struct DecoderWeights {
  Parameter<T> embed_weight, embed_bias;
  Parameter<T> mask_token;  // [1×decoder d]
  std::vector<BlockWeights<T>> blocks;
  Parameter<T> norm_gain, norm_bias;
  Parameter<T> pred_weight, pred_bias;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(self.embed_weight), f(self.embed_bias), f(self.mask_token);
    for (auto& b : self.blocks) BlockWeights<T>::visit(b, f);
    f(self.norm_gain), f(self.norm_bias), f(self.pred_weight), f(self.pred_bias);
  }
};

/// Encoder + decoder weights with their configuration. Parameters are visited
/// in a fixed canonical order (checkpoint layout, optimizer state).
template <typename T>
struct BasicModel {
  ModelConfig config;
  DecoderConfig decoder_config;
  EncoderWeights<T> encoder;
  DecoderWeights<T> decoder;

  template <typename F>
  void visit(F&& f) {
    EncoderWeights<T>::visit(encoder, f);
    DecoderWeights<T>::visit(decoder, f);
  }
  template <typename F>
  void visit(F&& f) const {
    EncoderWeights<T>::visit(encoder, f);
    DecoderWeights<T>::visit(decoder, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const Parameter<T>& p) { n += p.value.size(); });
    return n;
  }

  void zero_grad() {
    visit([](Parameter<T>& p) { p.zero_grad(); });
  }

  /// All parameters allocated with their final names and shapes, zero-valued.
  static BasicModel shaped(const ModelConfig& config, const DecoderConfig& decoder_config);

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> out = BasicModel<U>::shaped(config, decoder_config);
    std::vector<const Parameter<T>*> src;
    visit([&](const Parameter<T>& p) { src.push_back(&p); });
    std::size_t i = 0;
    out.visit([&](Parameter<U>& p) {
      p.value = src[i++]->value.template cast<U>();
      p.zero_grad();
    });
    return out;
  }
};

using Model = BasicModel<float>;

namespace detail {

template <typename T>
Parameter<T> make_param(const std::string& name, std::vector<int> shape) {
  return Parameter<T>(name, BasicTensor<T>(std::move(shape)));
}

template <typename T>
BlockWeights<T> shaped_block(const std::string& prefix, int d, int mlp_ratio) {
  BlockWeights<T> b;
  const int h = d * mlp_ratio;
  b.ln1_gain = make_param<T>(prefix + ".ln1.gain", {d});
  b.ln1_bias = make_param<T>(prefix + ".ln1.bias", {d});
  b.qkv_weight = make_param<T>(prefix + ".qkv.weight", {d, 3 * d});
  b.qkv_bias = make_param<T>(prefix + ".qkv.bias", {3 * d});
  b.proj_weight = make_param<T>(prefix + ".proj.weight", {d, d});
  b.proj_bias = make_param<T>(prefix + ".proj.bias", {d});
  b.ln2_gain = make_param<T>(prefix + ".ln2.gain", {d});
  b.ln2_bias = make_param<T>(prefix + ".ln2.bias", {d});
  b.fc1_weight = make_param<T>(prefix + ".fc1.weight", {d, h});
  b.fc1_bias = make_param<T>(prefix + ".fc1.bias", {h});
  b.fc2_weight = make_param<T>(prefix + ".fc2.weight", {h, d});
  b.fc2_bias = make_param<T>(prefix + ".fc2.bias", {d});
  return b;
}

}  // namespace detail

template <typename T>
BasicModel<T> BasicModel<T>::shaped(const ModelConfig& c, const DecoderConfig& dc) {
  using detail::make_param;
  c.validate();
  dc.validate();
  BasicModel<T> m;
  m.config = c;
  m.decoder_config = dc;
  const int d = c.embed_dim;
  auto& e = m.encoder;
  e.patch_weight = make_param<T>("encoder.patch.weight", {c.patch_pixels(), d});
  e.patch_bias = make_param<T>("encoder.patch.bias", {d});
  e.cls = make_param<T>("encoder.cls", {1, d});
  for (int i = 0; i < c.depth; ++i) {
    e.blocks.push_back(detail::shaped_block<T>("encoder.blocks." + std::to_string(i), d, c.mlp_ratio));
  }
  e.norm_gain = make_param<T>("encoder.norm.gain", {d});
  e.norm_bias = make_param<T>("encoder.norm.bias", {d});
  e.head_norm_gain = make_param<T>("encoder.head.norm.gain", {d});
  e.head_norm_bias = make_param<T>("encoder.head.norm.bias", {d});
  e.head_weight = make_param<T>("encoder.head.weight", {d, c.num_classes});
  e.head_bias = make_param<T>("encoder.head.bias", {c.num_classes});

  const int dd = dc.embed_dim;
  auto& r = m.decoder;
  r.embed_weight = make_param<T>("decoder.embed.weight", {d, dd});
  r.embed_bias = make_param<T>("decoder.embed.bias", {dd});
  r.mask_token = make_param<T>("decoder.mask_token", {1, dd});
  for (int i = 0; i < dc.depth; ++i) {
    r.blocks.push_back(detail::shaped_block<T>("decoder.blocks." + std::to_string(i), dd, dc.mlp_ratio));
  }
  r.norm_gain = make_param<T>("decoder.norm.gain", {dd});
  r.norm_bias = make_param<T>("decoder.norm.bias", {dd});
  r.pred_weight = make_param<T>("decoder.pred.weight", {dd, c.patch_pixels()});
  r.pred_bias = make_param<T>("decoder.pred.bias", {c.patch_pixels()});
  return m;
}

/// Xavier-uniform matrices, zero biases, unit norm gains, N(0, 0.02) tokens.
Model init_model(const ModelConfig& config, const DecoderConfig& decoder_config, std::uint64_t seed);

/// Canonical `key=value` lines for both configs plus fixed numeric choices
/// (activation, positional encoding), sorted by key.
std::string serialize_configs(const ModelConfig& config, const DecoderConfig& decoder_config);

/// Applies one `key=value` setting. Returns false when the key is not a
/// model/decoder key; throws UsageError on a malformed value.
bool apply_model_key(ModelConfig& config, DecoderConfig& decoder_config, const std::string& key,
                     const std::string& value);

}  // namespace tore
