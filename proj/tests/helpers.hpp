// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "tore/config.hpp"

namespace tore::testing {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

/// 16×16 image, patch 4: 4×4 token grid, 2×2 glimpse grid.
inline ModelConfig small_config(int depth = 3) {
  ModelConfig c;
  c.depth = depth;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.patch_size = 4;
  c.image_height = 16;
  c.image_width = 16;
  c.channels = 3;
  c.num_classes = 5;
  return c;
}

/// 32×32 image, patch 4: 8×8 token grid, 4×4 glimpse grid.
inline ModelConfig grid8_config(int depth = 4) {
  ModelConfig c = small_config(depth);
  c.image_height = 32;
  c.image_width = 32;
  return c;
}

inline DecoderConfig small_decoder() {
  DecoderConfig d;
  d.depth = 1;
  d.num_heads = 2;
  d.embed_dim = 8;
  d.mlp_ratio = 2;
  return d;
}

/// At most 1000 parameters: 8×8 image, patch 2, width 4.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.depth = 2;
  c.embed_dim = 4;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.patch_size = 2;
  c.image_height = 8;
  c.image_width = 8;
  c.channels = 3;
  c.num_classes = 3;
  return c;
}

inline DecoderConfig tiny_decoder() {
  DecoderConfig d;
  d.depth = 1;
  d.num_heads = 2;
  d.embed_dim = 4;
  d.mlp_ratio = 2;
  return d;
}

/// Randomizes every parameter, including biases and norm gains, so no path is trivially zero.
inline void randomize(Model& m, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  m.visit([&](Parameter<float>& p) {
    const bool gain = p.name.find("gain") != std::string::npos;
    for (auto& v : p.value.data()) v = static_cast<float>(gain ? 1.0 + rng.uniform(-0.3, 0.3) : rng.uniform(-scale, scale));
  });
}

inline Model random_model(const ModelConfig& c, const DecoderConfig& d, std::uint64_t seed, double scale = 0.5) {
  Model m = Model::shaped(c, d);
  randomize(m, seed, scale);
  return m;
}

inline Tensor random_image(const ModelConfig& c, Rng& rng) {
  return random_tensor({c.image_height, c.image_width, c.channels}, rng, 0.0, 1.0);
}

inline std::vector<int> all_positions(const ModelConfig& c) {
  std::vector<int> p(static_cast<std::size_t>(c.grid_size()));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

inline double max_abs(const Tensor& a, const Tensor& b) { return kernels::max_abs_diff(a, b); }

}  // namespace tore::testing
