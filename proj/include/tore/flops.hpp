// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytical cost model. One multiply-accumulate counts as one FLOP; this
// convention reproduces the published GFLOPs columns, the 2-FLOPs-per-MAC one
// is off by a factor of two.

#include <string>
#include <vector>

#include "tore/model.hpp"

namespace tore {

struct ArchSpec {
  std::string name;
  int depth = 0;
  int embed_dim = 0;
  int num_heads = 1;
  int mlp_ratio = 4;
  int patch_size = 16;  // ignored for decoders

  static ArchSpec vit_b() { return {"vit-b", 12, 768, 12, 4, 16}; }
  static ArchSpec vit_l() { return {"vit-l", 24, 1024, 16, 4, 16}; }
  static ArchSpec decoder_light() { return {"decoder-light", 1, 128, 4, 4, 0}; }
  static ArchSpec decoder_mae() { return {"decoder-mae", 8, 512, 16, 4, 0}; }
  /// Throws UsageError for unknown names.
  static ArchSpec preset(const std::string& name);

  static ArchSpec from(const ModelConfig& c) { return {"custom", c.depth, c.embed_dim, c.num_heads, c.mlp_ratio, c.patch_size}; }
  static ArchSpec from(const DecoderConfig& c) { return {"custom", c.depth, c.embed_dim, c.num_heads, c.mlp_ratio, 0}; }
};

struct RegimeSpec {
  std::string name;
  int image_height = 0;
  int image_width = 0;
  int glimpses = 0;   // p
  int span = 2;       // glimpse side in tokens
  int channels = 3;
  int num_classes = 0;

  static RegimeSpec sun360() { return {"sun360", 128, 256, 8, 2, 3, 26}; }
  static RegimeSpec std224() { return {"std224", 224, 224, 12, 2, 3, 100}; }
  static RegimeSpec preset(const std::string& name);

  static RegimeSpec from(const ModelConfig& c, int glimpses) {
    return {"custom", c.image_height, c.image_width, glimpses, 2, c.channels, c.num_classes};
  }
};

enum class CostMode { cached, naive };

const char* to_string(CostMode m);
CostMode parse_cost_mode(const std::string& s);

/// One transformer block over t tokens: 3td² + td² + 2r·td² + 2t²d, plus
/// 5td + 4t² for normalization and softmax.
double block_flops(double t, double d, int num_heads, int mlp_ratio);

struct StepFlops {
  double extractor = 0;
  double aggregator = 0;
  double decoder = 0;
  double total() const { return extractor + aggregator + decoder; }
};

struct FlopReport {
  std::vector<StepFlops> steps;
  double extractor = 0;
  double aggregator = 0;
  double decoder = 0;
  double total = 0;

  double gflops() const { return total / 1e9; }
  /// Cumulative total after `step` steps (1-based), in GFLOPs.
  double cumulative_gflops(int step) const;
};

/// Cached: tokenizer + κ blocks once per glimpse (5 tokens), aggregator over
/// 4j+1 tokens at step j, decoder over the full grid every step. Naive: the
/// whole encoder over 4j+1 tokens every step, tokenization once per glimpse.
FlopReport episode_flops(const ArchSpec& arch, const ArchSpec& decoder, const RegimeSpec& regime, int kappa,
                         CostMode mode);

struct TableRow {
  std::string arch;
  std::string decoder;
  std::string regime;
  int kappa = 0;
  CostMode mode = CostMode::cached;
};

struct TableEntry {
  TableRow row;
  FlopReport report;
  double reduction_pct = 0;  // vs the baseline row
};

/// Evaluates every row; reduction is measured against `rows[baseline]`.
std::vector<TableEntry> table_report(const std::vector<TableRow>& rows, std::size_t baseline);

/// Column set: arch,decoder,regime,kappa,mode,extractor_gflops,aggregator_gflops,decoder_gflops,total_gflops,reduction_pct
std::string table_csv(const std::vector<TableEntry>& entries);
std::string table_markdown(const std::vector<TableEntry>& entries);

/// Rows "arch:decoder:kappa:mode" separated by commas, all on `regime`.
std::vector<TableRow> parse_rows(const std::string& spec, const std::string& regime);

}  // namespace tore
