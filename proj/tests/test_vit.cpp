// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace tore;
using namespace tore::testing;

namespace {

Model zero_model(const ModelConfig& c) { return Model::shaped(c, small_decoder()); }

// Attention block recomputed with explicit Q, K, V in double.
TensorD block_oracle(const BlockWeights<float>& w, const Tensor& xin, int heads, double eps) {
  const int t = xin.rows(), d = xin.cols(), hd = d / heads;
  auto ln = [&](const TensorD& x, const Tensor& gain, const Tensor& bias) {
    TensorD y(x.shape());
    for (int r = 0; r < t; ++r) {
      double mean = 0, var = 0;
      for (int j = 0; j < d; ++j) mean += x.at(r, j);
      mean /= d;
      for (int j = 0; j < d; ++j) var += (x.at(r, j) - mean) * (x.at(r, j) - mean);
      var /= d;
      for (int j = 0; j < d; ++j) y.at(r, j) = (x.at(r, j) - mean) / std::sqrt(var + eps) * gain[static_cast<std::size_t>(j)] + bias[static_cast<std::size_t>(j)];
    }
    return y;
  };
  auto affine = [&](const TensorD& x, const Tensor& W, const Tensor& b) {
    TensorD y({x.rows(), W.cols()});
    for (int r = 0; r < x.rows(); ++r)
      for (int o = 0; o < W.cols(); ++o) {
        double s = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < W.rows(); ++i) s += x.at(r, i) * W.at(i, o);
        y.at(r, o) = s;
      }
    return y;
  };
  TensorD x = xin.cast<double>();
  TensorD h = ln(x, w.ln1_gain.value, w.ln1_bias.value);
  TensorD Q = affine(h, w.qkv_weight.value, w.qkv_bias.value);
  TensorD att({t, d});
  for (int head = 0; head < heads; ++head) {
    for (int i = 0; i < t; ++i) {
      std::vector<double> s(static_cast<std::size_t>(t));
      for (int j = 0; j < t; ++j) {
        double dot = 0;
        for (int k = 0; k < hd; ++k) dot += Q.at(i, head * hd + k) * Q.at(j, d + head * hd + k);
        s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(hd));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0;
      for (double& v : s) z += (v = std::exp(v - mx));
      for (int k = 0; k < hd; ++k) {
        double acc = 0;
        for (int j = 0; j < t; ++j) acc += s[static_cast<std::size_t>(j)] / z * Q.at(j, 2 * d + head * hd + k);
        att.at(i, head * hd + k) = acc;
      }
    }
  }
  TensorD proj = affine(att, w.proj_weight.value, w.proj_bias.value);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
  TensorD h2 = affine(ln(x, w.ln2_gain.value, w.ln2_bias.value), w.fc1_weight.value, w.fc1_bias.value);
  for (auto& v : h2.data()) v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
  TensorD out = affine(h2, w.fc2_weight.value, w.fc2_bias.value);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += out[i];
  return x;
}

TokenSet random_tokens(const ModelConfig& c, std::vector<int> positions, Rng& rng) {
  TokenSet t;
  t.cls = random_tensor({c.embed_dim}, rng);
  t.positions = std::move(positions);
  if (!t.positions.empty()) t.patches = random_tensor({static_cast<int>(t.positions.size()), c.embed_dim}, rng);
  return t;
}

}  // namespace

TEST_CASE("positional encoding at the origin") {
  const Tensor pe = sinusoidal_pe<float>(0, 16, 4, 4);
  for (int half = 0; half < 2; ++half)
    for (int i = 0; i < 4; ++i) {
      CHECK(pe[static_cast<std::size_t>(half * 8 + i)] == 0.0f);
      CHECK(pe[static_cast<std::size_t>(half * 8 + 4 + i)] == 1.0f);
    }
}

TEST_CASE("positional encoding range and distinctness") {
  const int d = 16;
  std::vector<Tensor> all;
  for (int p = 0; p < 16; ++p) {
    all.push_back(sinusoidal_pe<float>(p, d, 4, 4));
    for (float v : all.back().data()) CHECK((v >= -1.0f && v <= 1.0f));
  }
  double worst = -1;
  for (int a = 0; a < 16; ++a)
    for (int b = a + 1; b < 16; ++b) {
      double dot = 0, na = 0, nb = 0;
      for (int i = 0; i < d; ++i) {
        const double x = all[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)], y = all[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        dot += x * y, na += x * x, nb += y * y;
      }
      worst = std::max(worst, dot / std::sqrt(na * nb));
    }
  CHECK(worst < 1 - 1e-6);
}

TEST_CASE("positional encoding needs d divisible by 4") {
  CHECK_THROWS_AS(sinusoidal_pe<float>(0, 6, 2, 2), ContractError);
  ModelConfig c = small_config();
  c.embed_dim = 18;
  c.num_heads = 2;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("tokenize with zero weights yields the positional encoding") {
  const Model m = zero_model(small_config());
  const std::vector<int> pos{0, 5, 15};
  const TokenSet t = tokenize(m, Tensor({3, m.config.patch_pixels()}), pos);
  for (int i = 0; i < 3; ++i) {
    const Tensor pe = sinusoidal_pe<float>(pos[static_cast<std::size_t>(i)], m.config.embed_dim, 4, 4);
    for (int j = 0; j < m.config.embed_dim; ++j) CHECK(t.patches.at(i, j) == pe[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("tokenize: same patch at two positions differs by the encodings") {
  const Model m = random_model(small_config(), small_decoder(), 1);
  Rng rng(2);
  const Tensor patch = random_tensor({1, m.config.patch_pixels()}, rng, 0, 1);
  Tensor two({2, m.config.patch_pixels()});
  for (int r = 0; r < 2; ++r) std::copy(patch.data().begin(), patch.data().end(), two.row(r).begin());
  const TokenSet t = tokenize(m, two, std::vector<int>{2, 9});
  const Tensor pa = sinusoidal_pe<float>(2, 16, 4, 4), pb = sinusoidal_pe<float>(9, 16, 4, 4);
  for (int j = 0; j < 16; ++j) CHECK(std::abs((t.patches.at(0, j) - t.patches.at(1, j)) - (pa[static_cast<std::size_t>(j)] - pb[static_cast<std::size_t>(j)])) <= 1e-6);
}

TEST_CASE("tokenize matches flatten, multiply, add encoding at d=768") {
  ModelConfig c;
  c.depth = 0;
  c.image_height = 16;
  c.image_width = 16;
  const Model m = init_model(c, DecoderConfig{}, 4);
  Rng rng(5);
  const Tensor img = random_image(c, rng);
  const TokenSet t = tokenize(m, extract_patches(img, c, std::vector<int>{0}), std::vector<int>{0});
  const Tensor pe = sinusoidal_pe<float>(0, 768, 1, 1);
  for (int o = 0; o < 768; ++o) {
    float s = 0;
    int k = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int ch = 0; ch < 3; ++ch) s += img[(static_cast<std::size_t>(y) * 16 + x) * 3 + ch] * m.encoder.patch_weight.value.at(k++, o);
    s += m.encoder.patch_bias.value[static_cast<std::size_t>(o)];
    s += pe[static_cast<std::size_t>(o)];
    CHECK(std::abs(t.patches.at(0, o) - s) <= 1e-6);
  }
  for (int o = 0; o < 768; ++o) CHECK(t.cls[static_cast<std::size_t>(o)] == m.encoder.cls.value[static_cast<std::size_t>(o)]);
}

TEST_CASE("tokenize rejects positions outside the grid") {
  const Model m = zero_model(small_config());
  CHECK_THROWS_AS(tokenize(m, Tensor({1, m.config.patch_pixels()}), std::vector<int>{16}), RangeError);
}

TEST_CASE("block with zero weights is the identity") {
  const Model m = zero_model(small_config());
  Rng rng(3);
  const TokenSet in = random_tokens(m.config, {1, 2, 3}, rng);
  const auto [out, att] = block_forward(m, in, 1);
  CHECK(out.matrix() == in.matrix());
  CHECK(att.heads.size() == 2);
}

TEST_CASE("single-token block attention is [1]") {
  const Model m = random_model(small_config(), small_decoder(), 6);
  Rng rng(7);
  const auto [out, att] = block_forward(m, random_tokens(m.config, {}, rng), 2);
  for (const Tensor& a : att.heads) {
    CHECK(a.shape() == std::vector<int>{1, 1});
    CHECK(a[0] == 1.0f);
  }
}

TEST_CASE("block matches an explicit QKV oracle") {
  const Model m = random_model(small_config(), small_decoder(), 8);
  Rng rng(9);
  const TokenSet in = random_tokens(m.config, {0, 4, 7, 11}, rng);
  const auto [out, att] = block_forward(m, in, 2);
  const TensorD ref = block_oracle(m.encoder.blocks[1], in.matrix(), 2, m.config.layer_norm_eps);
  const Tensor got = out.matrix();
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-5);
  for (const Tensor& a : att.heads)
    for (int r = 0; r < a.rows(); ++r) {
      double s = 0;
      for (float v : a.row(r)) {
        CHECK((v >= 0.0f && v <= 1.0f));
        s += v;
      }
      CHECK(std::abs(s - 1) <= 1e-6);
    }
}

TEST_CASE("block input checks") {
  const Model m = random_model(small_config(), small_decoder(), 8);
  Rng rng(1);
  CHECK_THROWS_AS(block_forward(m, TokenSet{}, 1), ContractError);
  CHECK_THROWS_AS(block_forward(m, random_tokens(m.config, {0}, rng), 0), RangeError);
  CHECK_THROWS_AS(block_forward(m, random_tokens(m.config, {0}, rng), 4), RangeError);
}

TEST_CASE("head with zero weights gives zero logits; bias-only head gives the bias") {
  Model m = zero_model(small_config());
  Rng rng(10);
  const Tensor cls = random_tensor({16}, rng);
  const Tensor zero = head_forward(m, cls);
  for (float v : zero.data()) CHECK(v == 0.0f);
  m.encoder.head_bias.value = random_tensor({5}, rng);
  CHECK(head_forward(m, cls) == m.encoder.head_bias.value);
}

TEST_CASE("head matches an explicit affine oracle") {
  const Model m = random_model(small_config(), small_decoder(), 11);
  Rng rng(12);
  const Tensor cls = random_tensor({16}, rng);
  const Tensor logits = head_forward(m, cls);
  double mean = 0, var = 0;
  for (float v : cls.data()) mean += v;
  mean /= 16;
  for (float v : cls.data()) var += (v - mean) * (v - mean);
  var /= 16;
  for (int o = 0; o < 5; ++o) {
    double s = m.encoder.head_bias.value[static_cast<std::size_t>(o)];
    for (int i = 0; i < 16; ++i) {
      const double n = (cls[static_cast<std::size_t>(i)] - mean) / std::sqrt(var + 1e-6) * m.encoder.head_norm_gain.value[static_cast<std::size_t>(i)] + m.encoder.head_norm_bias.value[static_cast<std::size_t>(i)];
      s += n * m.encoder.head_weight.value.at(i, o);
    }
    CHECK(std::abs(logits[static_cast<std::size_t>(o)] - s) <= 1e-6);
  }
}

TEST_CASE("depth-0 forward is the head on the class token") {
  const Model m = random_model(small_config(0), small_decoder(), 13);
  Rng rng(14);
  const TokenSet t = random_tokens(m.config, {1, 2}, rng);
  CHECK(full_forward(m, t).logits == head_forward(m, t.cls));
}

TEST_CASE("full forward equals composed blocks then head") {
  const Model m = random_model(small_config(3), small_decoder(), 15);
  Rng rng(16);
  TokenSet t = random_tokens(m.config, {3, 8, 12}, rng);
  const ForwardResult f = full_forward(m, t);
  for (int i = 1; i <= 3; ++i) t = block_forward(m, t, i).first;
  CHECK(max_abs(f.logits, head_forward(m, t.cls)) <= 1e-6);
  CHECK(f.attention.size() == 3);
}

TEST_CASE("patch list order does not change logits") {
  const Model m = random_model(small_config(3), small_decoder(), 17);
  Rng rng(18);
  const Tensor img = random_image(m.config, rng);
  std::vector<int> pos = all_positions(m.config);
  const Tensor ref = full_forward(m, tokenize(m, extract_patches(img, m.config, pos), pos)).logits;
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = pos.size(); i > 1; --i) std::swap(pos[i - 1], pos[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    const Tensor got = full_forward(m, tokenize(m, extract_patches(img, m.config, pos), pos)).logits;
    CHECK(max_abs(got, ref) <= 1e-5);
  }
}

TEST_CASE("union of per-glimpse tokenizations equals one tokenization") {
  const Model m = random_model(small_config(2), small_decoder(), 19);
  Rng rng(20);
  const Tensor img = random_image(m.config, rng);
  const std::vector<int> pos = all_positions(m.config);
  const TokenSet whole = tokenize(m, extract_patches(img, m.config, pos), pos);
  TokenSet joined;
  joined.cls = whole.cls;
  std::vector<float> rows;
  for (int g = 0; g < 4; ++g) {
    const std::vector<int> gp{(g / 2) * 8 + (g % 2) * 2, (g / 2) * 8 + (g % 2) * 2 + 1, (g / 2) * 8 + (g % 2) * 2 + 4, (g / 2) * 8 + (g % 2) * 2 + 5};
    const TokenSet part = tokenize(m, extract_patches(img, m.config, gp), gp);
    joined.positions.insert(joined.positions.end(), gp.begin(), gp.end());
    rows.insert(rows.end(), part.patches.data().begin(), part.patches.data().end());
  }
  joined.patches = Tensor({16, 16}, rows);
  CHECK(max_abs(full_forward(m, joined).logits, full_forward(m, whole).logits) <= 1e-6);
}

TEST_CASE("final norm flag controls the decoder-facing embeddings") {
  ModelConfig c = small_config(1);
  const Model with = random_model(c, small_decoder(), 21);
  Model without = with;
  without.config.final_norm = false;
  Rng rng(22);
  const TokenSet t = random_tokens(c, {0, 1}, rng);
  const ForwardResult a = full_forward(with, t), b = full_forward(without, t);
  CHECK(a.logits == b.logits);
  const Tensor n = kernels::layer_norm(b.final_embeddings.matrix(), with.encoder.norm_gain.value, with.encoder.norm_bias.value, 1e-6f);
  CHECK(max_abs(n, a.final_embeddings.matrix()) == 0.0f);
}

TEST_CASE("image patch extraction round trip") {
  const ModelConfig c = small_config();
  Rng rng(23);
  const Tensor img = random_image(c, rng);
  CHECK(assemble_image(extract_patches(img, c, all_positions(c)), c) == img);
}
