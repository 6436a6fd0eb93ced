// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/config.hpp"

#include <charconv>
#include <locale>
#include <map>
#include <sstream>

namespace tore {

namespace {

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw UsageError("config: '" + key + "' expects an integer, got '" + value + "'");
  return out;
}

int parse_small(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < -1000000000LL || v > 1000000000LL) throw UsageError("config: '" + key + "' is out of range");
  return static_cast<int>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  is.imbue(std::locale::classic());
  double v = 0;
  is >> v;
  if (!is || !is.eof()) throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw UsageError("config: '" + key + "' expects 0/1/true/false, got '" + value + "'");
}

std::string real(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(12);
  os << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.model.depth = 6;
  c.model.embed_dim = 64;
  c.model.num_heads = 4;
  c.model.mlp_ratio = 4;
  c.model.patch_size = 4;
  c.model.image_height = 32;
  c.model.image_width = 32;
  c.model.channels = 3;
  c.model.num_classes = 10;
  c.decoder.depth = 1;
  c.decoder.num_heads = 4;
  c.decoder.embed_dim = 32;
  c.decoder.mlp_ratio = 4;
  c.train.lr_init = 1e-3;
  c.train.lr_min = 1e-5;
  c.train.max_epochs = 20;
  c.train.glimpses = 4;
  return c;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (apply_model_key(model, decoder, key, value)) {
    if (key == "model.num_classes") synthetic.num_classes = model.num_classes;
    if (key == "model.image_height") synthetic.height = model.image_height;
    if (key == "model.image_width") synthetic.width = model.image_width;
    if (key == "model.channels") synthetic.channels = model.channels;
    return;
  }
  if (key == "train.batch_size") train.batch_size = parse_small(key, value);
  else if (key == "train.max_epochs") train.max_epochs = parse_small(key, value);
  else if (key == "train.patience") train.patience = parse_small(key, value);
  else if (key == "train.lr_init") train.lr_init = parse_real(key, value);
  else if (key == "train.lr_min") train.lr_min = parse_real(key, value);
  else if (key == "train.beta1") train.beta1 = parse_real(key, value);
  else if (key == "train.beta2") train.beta2 = parse_real(key, value);
  else if (key == "train.eps") train.eps = parse_real(key, value);
  else if (key == "train.weight_decay") train.weight_decay = parse_real(key, value);
  else if (key == "train.lambda") train.lambda = parse_real(key, value);
  else if (key == "train.glimpses") train.glimpses = parse_small(key, value);
  else if (key == "train.masked_loss") train.masked_loss = parse_flag(key, value);
  else if (key == "train.fixed_kappa") train.fixed_kappa = parse_small(key, value);
  else if (key == "train.val_fraction") train.val_fraction = parse_real(key, value);
  else if (key == "synthetic.train") synthetic.train = parse_small(key, value);
  else if (key == "synthetic.val") synthetic.val = parse_small(key, value);
  else if (key == "synthetic.test") synthetic.test = parse_small(key, value);
  else if (key == "explore.policy") policy = parse_policy(value);
  else if (key == "explore.kappa") kappa = parse_small(key, value);
  else if (key == "explore.steps") steps = parse_small(key, value);
  else if (key == "explore.cold_start") cold_start = parse_cold_start(value);
  else if (key == "explore.score") score = parse_glimpse_score(value);
  else if (key == "eval.kappa_list") {
    kappa_list.clear();
    std::istringstream is(value);
    std::string item;
    while (std::getline(is, item, ';')) {
      if (!trim(item).empty()) kappa_list.push_back(parse_small(key, trim(item)));
    }
  } else if (key == "seed") {
    const long long v = parse_integer(key, value);
    if (v < 0) throw UsageError("config: seed must be non-negative");
    seed = static_cast<std::uint64_t>(v);
  } else {
    throw UsageError("config: unknown key '" + key + "'");
  }
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key=value");
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::load(const std::string& path) {
  try {
    apply_text(read_file(path));
  } catch (const LoadError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> kv;
  std::istringstream mcfg(serialize_configs(model, decoder));
  std::string line;
  while (std::getline(mcfg, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.max_epochs"] = std::to_string(train.max_epochs);
  kv["train.patience"] = std::to_string(train.patience);
  kv["train.lr_init"] = real(train.lr_init);
  kv["train.lr_min"] = real(train.lr_min);
  kv["train.beta1"] = real(train.beta1);
  kv["train.beta2"] = real(train.beta2);
  kv["train.eps"] = real(train.eps);
  kv["train.weight_decay"] = real(train.weight_decay);
  kv["train.lambda"] = real(train.lambda);
  kv["train.glimpses"] = std::to_string(train.glimpses);
  kv["train.masked_loss"] = train.masked_loss ? "1" : "0";
  kv["train.fixed_kappa"] = std::to_string(train.fixed_kappa);
  kv["train.val_fraction"] = real(train.val_fraction);
  kv["synthetic.train"] = std::to_string(synthetic.train);
  kv["synthetic.val"] = std::to_string(synthetic.val);
  kv["synthetic.test"] = std::to_string(synthetic.test);
  kv["explore.policy"] = to_string(policy);
  kv["explore.kappa"] = std::to_string(kappa);
  kv["explore.steps"] = std::to_string(steps);
  kv["explore.cold_start"] = cold_start == ColdStart::random ? "random" : "center";
  kv["explore.score"] = score == GlimpseScore::sum ? "sum" : "max";
  std::string kl;
  for (int k : kappa_list) kl += (kl.empty() ? "" : ";") + std::to_string(k);
  kv["eval.kappa_list"] = kl;
  kv["seed"] = std::to_string(seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::validate() const {
  try {
    model.validate();
    decoder.validate();
    GlimpseGrid grid(model);
    if (steps < 1 || steps > grid.size()) throw UsageError("explore.steps must lie in [1, " + std::to_string(grid.size()) + "]");
    if (train.glimpses > grid.size()) throw UsageError("train.glimpses exceeds the number of glimpses");
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  train.validate();
  if (kappa < 0 || kappa > model.depth) throw UsageError("explore.kappa must lie in [0, model.depth]");
  if (train.fixed_kappa > model.depth) throw UsageError("train.fixed_kappa exceeds model.depth");
  for (int k : kappa_list)
    if (k < 0 || k > model.depth) throw UsageError("eval.kappa_list entry outside [0, model.depth]");
  if (synthetic.train < 0 || synthetic.val < 0 || synthetic.test < 0) throw UsageError("synthetic split sizes must be non-negative");
}

std::vector<int> RunConfig::kappas() const {
  if (!kappa_list.empty()) return kappa_list;
  std::vector<int> all;
  for (int k = 0; k <= model.depth; ++k) all.push_back(k);
  return all;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

EvalOptions RunConfig::eval_options(int jobs) const {
  EvalOptions e;
  e.policy = policy;
  e.kappa = kappa;
  e.steps = steps;
  e.seed = seed;
  e.cold_start = cold_start;
  e.score = score;
  e.jobs = jobs;
  return e;
}

}  // namespace tore
