// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Flat key=value run configuration ('#' comments, one pair per line).

#include <cstdint>
#include <string>
#include <vector>

#include "tore/trainer.hpp"

namespace tore {

struct RunConfig {
  ModelConfig model;
  DecoderConfig decoder;
  TrainConfig train;
  SyntheticSpec synthetic;
  Policy policy = Policy::ame;
  int kappa = 0;
  int steps = 4;
  ColdStart cold_start = ColdStart::random;
  GlimpseScore score = GlimpseScore::sum;
  std::vector<int> kappa_list;  // empty: every κ in 0..depth
  std::uint64_t seed = 0;

  /// Toy-scale defaults: 32×32 synthetic images, 6 blocks of width 64.
  static RunConfig defaults();

  /// Throws UsageError on unknown keys or malformed values.
  void apply(const std::string& key, const std::string& value);
  void apply_text(const std::string& text);
  void load(const std::string& path);

  /// Every key with its resolved value, sorted.
  std::string serialize() const;

  /// Consistency checks across sections; throws UsageError.
  void validate() const;

  std::vector<int> kappas() const;
  TrainConfig train_config() const;
  EvalOptions eval_options(int jobs = 1) const;
};

}  // namespace tore
