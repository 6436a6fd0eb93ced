// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Glimpse grid, attention-entropy maps and the two selection policies, plus
// the exploration episode loop that ties engine, decoder and policy together.

#include <cstdint>
#include <string>
#include <vector>

#include "tore/flops.hpp"
#include "tore/rng.hpp"
#include "tore/tore.hpp"

namespace tore {

/// Non-overlapping span×span token blocks tiling the token grid.
class GlimpseGrid {
 public:
  GlimpseGrid(int token_rows, int token_cols, int span = 2);
  explicit GlimpseGrid(const ModelConfig& c, int span = 2) : GlimpseGrid(c.grid_rows(), c.grid_cols(), span) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int size() const noexcept { return rows_ * cols_; }
  int span() const noexcept { return span_; }
  int token_rows() const noexcept { return token_rows_; }
  int token_cols() const noexcept { return token_cols_; }

  /// Token positions of glimpse `index`, row-major inside the glimpse.
  std::vector<int> positions(int index) const;
  /// Glimpse containing token position `position`.
  int glimpse_of(int position) const;
  /// The glimpse closest to the image center (lowest index on ties).
  int center() const;

 private:
  int token_rows_, token_cols_, span_, rows_, cols_;
};

/// Per-position sum over heads of row entropies, in bits. Row i of each
/// matrix is the query at token position i. 0·log2(0) = 0. Throws
/// ContractError if a row sum is off by more than 1e-4.
Tensor entropy_map(const std::vector<Tensor>& attention);

enum class GlimpseScore { sum, max };
enum class Policy { ame, random };
enum class ColdStart { random, center };

const char* to_string(Policy p);
Policy parse_policy(const std::string& s);
ColdStart parse_cold_start(const std::string& s);
GlimpseScore parse_glimpse_score(const std::string& s);

struct PolicyState {
  std::vector<int> chosen;
  Rng rng;

  explicit PolicyState(std::uint64_t seed = 0) : rng(seed) {}
  bool is_chosen(int glimpse) const;
};

/// Zeroes entries of chosen glimpses, scores the remaining glimpses by the sum
/// (or max) of their token entries and returns the argmax, lowest index on
/// ties. Throws ExhaustionError when every glimpse has been chosen.
int ame_select(const Tensor& entropy, const PolicyState& state, const GlimpseGrid& grid,
               GlimpseScore score = GlimpseScore::sum);

/// Uniform over unchosen glimpses. Throws ExhaustionError.
int random_select(PolicyState& state, const GlimpseGrid& grid);

struct EpisodeOptions {
  Policy policy = Policy::ame;
  int steps = 4;
  std::uint64_t seed = 0;
  ColdStart cold_start = ColdStart::random;
  GlimpseScore score = GlimpseScore::sum;
};

struct EpisodeStep {
  int glimpse = -1;
  Tensor logits;
  int pred = -1;
  float conf = 0;
  Tensor entropy;         // [grid_size], from this step's decoder attention
  Tensor reconstruction;  // [grid_size × patch_pixels]
  double gflops_cum = 0;  // analytical, cached mode
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  std::vector<int> glimpses;  // chosen glimpse indices in order
  std::vector<int> observed;  // observed token positions in order
  int extraction_calls = 0;
};

/// select -> extract -> cache_update -> aggregate -> decode -> entropy_map.
EpisodeTrace run_episode(const Model& model, Split split, const Tensor& image, const EpisodeOptions& options);

/// Replays a fixed glimpse sequence through a fresh cache; returns final logits.
Tensor replay_glimpses(const Model& model, Split split, const Tensor& image, const std::vector<int>& glimpses);

/// Softmax probability of the argmax class.
float confidence(const Tensor& logits);

}  // namespace tore
