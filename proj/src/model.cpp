// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/model.hpp"

#include <charconv>
#include <locale>
#include <cmath>
#include <map>
#include <sstream>

#include "tore/rng.hpp"

namespace tore {

void ModelConfig::validate() const {
  if (depth < 0 || embed_dim <= 0 || num_heads <= 0 || mlp_ratio <= 0 || patch_size <= 0 || image_height <= 0 ||
      image_width <= 0 || channels <= 0 || num_classes <= 0) {
    throw ContractError("model config: dimensions must be positive (depth may be 0)");
  }
  if (embed_dim % num_heads != 0) throw ContractError("model config: embed_dim must be divisible by num_heads");
  if (embed_dim % 4 != 0) throw ContractError("model config: embed_dim must be divisible by 4");
  if (image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ContractError("model config: image dimensions must be divisible by patch_size");
  }
}

void DecoderConfig::validate() const {
  if (depth < 1 || num_heads <= 0 || embed_dim <= 0 || mlp_ratio <= 0) {
    throw ContractError("decoder config: dimensions must be positive and depth at least 1");
  }
  if (embed_dim % num_heads != 0) throw ContractError("decoder config: embed_dim must be divisible by num_heads");
  if (embed_dim % 4 != 0) throw ContractError("decoder config: embed_dim must be divisible by 4");
}

namespace {

void xavier_uniform(Tensor& w, Rng& rng) {
  const double fan_in = w.dim(0), fan_out = w.dim(1);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-a, a));
}

void normal_fill(Tensor& w, Rng& rng, double stddev) {
  for (auto& v : w.data()) v = static_cast<float>(rng.normal() * stddev);
}

void init_block(BlockWeights<float>& b, Rng& rng) {
  for (auto* p : {&b.ln1_gain, &b.ln2_gain}) p->value = Tensor::filled(p->value.shape(), 1.0f);
  for (auto* p : {&b.qkv_weight, &b.proj_weight, &b.fc1_weight, &b.fc2_weight}) xavier_uniform(p->value, rng);
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw UsageError("config: '" + key + "' expects an integer, got '" + value + "'");
  return out;
}

float parse_float(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  is.imbue(std::locale::classic());
  double v = 0;
  is >> v;
  if (!is || !is.eof()) throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
  return static_cast<float>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw UsageError("config: '" + key + "' expects 0/1/true/false, got '" + value + "'");
}

std::string format_float(float v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

Model init_model(const ModelConfig& config, const DecoderConfig& decoder_config, std::uint64_t seed) {
  Model m = Model::shaped(config, decoder_config);
  Rng rng(mix_seed(seed, 0x1417));
  auto& e = m.encoder;
  xavier_uniform(e.patch_weight.value, rng);
  normal_fill(e.cls.value, rng, 0.02);
  for (auto& b : e.blocks) init_block(b, rng);
  e.norm_gain.value = Tensor::filled(e.norm_gain.value.shape(), 1.0f);
  e.head_norm_gain.value = Tensor::filled(e.head_norm_gain.value.shape(), 1.0f);
  xavier_uniform(e.head_weight.value, rng);

  auto& r = m.decoder;
  xavier_uniform(r.embed_weight.value, rng);
  normal_fill(r.mask_token.value, rng, 0.02);
  for (auto& b : r.blocks) init_block(b, rng);
  r.norm_gain.value = Tensor::filled(r.norm_gain.value.shape(), 1.0f);
  xavier_uniform(r.pred_weight.value, rng);
  return m;
}

std::string serialize_configs(const ModelConfig& c, const DecoderConfig& dc) {
  std::map<std::string, std::string> kv{
      {"model.depth", std::to_string(c.depth)},
      {"model.embed_dim", std::to_string(c.embed_dim)},
      {"model.num_heads", std::to_string(c.num_heads)},
      {"model.mlp_ratio", std::to_string(c.mlp_ratio)},
      {"model.patch_size", std::to_string(c.patch_size)},
      {"model.image_height", std::to_string(c.image_height)},
      {"model.image_width", std::to_string(c.image_width)},
      {"model.channels", std::to_string(c.channels)},
      {"model.num_classes", std::to_string(c.num_classes)},
      {"model.final_norm", c.final_norm ? "1" : "0"},
      {"model.layer_norm_eps", format_float(c.layer_norm_eps)},
      {"decoder.depth", std::to_string(dc.depth)},
      {"decoder.num_heads", std::to_string(dc.num_heads)},
      {"decoder.embed_dim", std::to_string(dc.embed_dim)},
      {"decoder.mlp_ratio", std::to_string(dc.mlp_ratio)},
      {"model.activation", "gelu_tanh"},
      {"model.pos_encoding", "sincos_2d"},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

bool apply_model_key(ModelConfig& c, DecoderConfig& dc, const std::string& key, const std::string& value) {
  if (key == "model.depth") c.depth = parse_int(key, value);
  else if (key == "model.embed_dim") c.embed_dim = parse_int(key, value);
  else if (key == "model.num_heads") c.num_heads = parse_int(key, value);
  else if (key == "model.mlp_ratio") c.mlp_ratio = parse_int(key, value);
  else if (key == "model.patch_size") c.patch_size = parse_int(key, value);
  else if (key == "model.image_height") c.image_height = parse_int(key, value);
  else if (key == "model.image_width") c.image_width = parse_int(key, value);
  else if (key == "model.channels") c.channels = parse_int(key, value);
  else if (key == "model.num_classes") c.num_classes = parse_int(key, value);
  else if (key == "model.final_norm") c.final_norm = parse_bool(key, value);
  else if (key == "model.layer_norm_eps") c.layer_norm_eps = parse_float(key, value);
  else if (key == "decoder.depth") dc.depth = parse_int(key, value);
  else if (key == "decoder.num_heads") dc.num_heads = parse_int(key, value);
  else if (key == "decoder.embed_dim") dc.embed_dim = parse_int(key, value);
  else if (key == "decoder.mlp_ratio") dc.mlp_ratio = parse_int(key, value);
  else if (key == "model.activation") {
    if (value != "gelu_tanh") throw UsageError("config: only model.activation=gelu_tanh is supported");
  } else if (key == "model.pos_encoding") {
    if (value != "sincos_2d") throw UsageError("config: only model.pos_encoding=sincos_2d is supported");
  } else {
    return false;
  }
  return true;
}

}  // namespace tore
