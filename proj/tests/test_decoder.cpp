// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace tore;
using namespace tore::testing;

namespace {

TokenSet random_final(const ModelConfig& c, std::vector<int> positions, Rng& rng) {
  TokenSet t;
  t.cls = random_tensor({c.embed_dim}, rng);
  t.positions = std::move(positions);
  if (!t.positions.empty()) t.patches = random_tensor({static_cast<int>(t.positions.size()), c.embed_dim}, rng);
  return t;
}

}  // namespace

TEST_CASE("fully observed grid: no mask tokens, full-grid attention") {
  const Model m = random_model(small_config(), small_decoder(), 1);
  Rng rng(2);
  const TokenSet t = random_final(m.config, all_positions(m.config), rng);
  const DecodeResult r = decode(m, t);
  CHECK(r.reconstruction.shape() == std::vector<int>{16, m.config.patch_pixels()});
  CHECK(r.attention.size() == 2);
  for (const Tensor& a : r.attention) CHECK(a.shape() == std::vector<int>{16, 16});
  const DecoderInput in = assemble_decoder_input(m, t);
  CHECK(in.projected == 16);
  CHECK(in.masked == 0);
}

TEST_CASE("zero decoder except the output bias reconstructs the bias everywhere") {
  Model m = random_model(small_config(), small_decoder(), 3);
  DecoderWeights<float>::visit(m.decoder, [](Parameter<float>& p) { p.value = Tensor(p.value.shape()); });
  Rng rng(4);
  m.decoder.pred_bias.value = random_tensor({m.config.patch_pixels()}, rng);
  const DecodeResult r = decode(m, random_final(m.config, {0, 1, 4, 5}, rng));
  for (int p = 0; p < 16; ++p)
    for (int j = 0; j < m.config.patch_pixels(); ++j) CHECK(r.reconstruction.at(p, j) == m.decoder.pred_bias.value[static_cast<std::size_t>(j)]);
}

TEST_CASE("one observed glimpse: 4 projected tokens and 12 mask tokens") {
  const Model m = random_model(small_config(), small_decoder(), 5);
  Rng rng(6);
  const std::vector<int> pos{10, 11, 14, 15};
  const TokenSet t = random_final(m.config, pos, rng);
  const DecoderInput in = assemble_decoder_input(m, t);
  CHECK(in.projected == 4);
  CHECK(in.masked == 12);
  const int dd = m.decoder_config.embed_dim;
  REQUIRE(in.tokens.shape() == std::vector<int>{16, dd});
  for (int p = 0; p < 16; ++p) {
    const Tensor pe = sinusoidal_pe<float>(p, dd, 4, 4);
    const auto it = std::find(pos.begin(), pos.end(), p);
    for (int j = 0; j < dd; ++j) {
      double expect;
      if (it == pos.end()) {
        expect = m.decoder.mask_token.value[static_cast<std::size_t>(j)];
      } else {
        const int row = static_cast<int>(it - pos.begin());
        expect = m.decoder.embed_bias.value[static_cast<std::size_t>(j)];
        for (int i = 0; i < m.config.embed_dim; ++i) expect += static_cast<double>(t.patches.at(row, i)) * m.decoder.embed_weight.value.at(i, j);
      }
      expect += pe[static_cast<std::size_t>(j)];
      CHECK(std::abs(in.tokens.at(p, j) - expect) <= 1e-5);
    }
  }
}

TEST_CASE("decoder attention is row-stochastic over the grid") {
  const Model m = random_model(small_config(), small_decoder(), 7);
  Rng rng(8);
  for (const std::vector<int>& pos : {std::vector<int>{}, std::vector<int>{3}, std::vector<int>{0, 5, 10, 15}}) {
    const DecodeResult r = decode(m, random_final(m.config, pos, rng));
    CHECK(r.reconstruction.rows() == 16);
    for (const Tensor& a : r.attention) {
      CHECK(a.shape() == std::vector<int>{16, 16});
      for (int i = 0; i < 16; ++i) {
        double s = 0;
        for (float v : a.row(i)) s += v;
        CHECK(std::abs(s - 1) <= 1e-6);
      }
    }
  }
}

TEST_CASE("decoder rejects positions outside the grid") {
  const Model m = random_model(small_config(), small_decoder(), 9);
  Rng rng(10);
  CHECK_THROWS_AS(decode(m, random_final(m.config, {16}, rng)), RangeError);
  CHECK_THROWS_AS(decode(m, random_final(m.config, {-1}, rng)), RangeError);
}

TEST_CASE("deeper decoders report the last block's attention") {
  DecoderConfig dc = small_decoder();
  dc.depth = 3;
  const Model m = random_model(small_config(), dc, 11);
  Rng rng(12);
  const DecodeResult r = decode(m, random_final(m.config, {1, 2}, rng));
  CHECK(r.attention.size() == static_cast<std::size_t>(dc.num_heads));
  DecoderConfig bad = small_decoder();
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}
