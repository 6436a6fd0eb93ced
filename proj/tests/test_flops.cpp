// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"

using namespace tore;
using namespace tore::testing;

namespace {

double gflops(const char* arch, const char* dec, const RegimeSpec& r, int kappa, CostMode mode) {
  return episode_flops(ArchSpec::preset(arch), ArchSpec::preset(dec), r, kappa, mode).gflops();
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * want; }

// Counts the scalar multiplies of one encoder block run on t tokens.
std::uint64_t measured_block(int t, int d, int heads) {
  ModelConfig c;
  c.depth = 1;
  c.embed_dim = d;
  c.num_heads = heads;
  c.image_height = 224;
  c.image_width = 224;
  const Model m = Model::shaped(c, DecoderConfig{});
  Rng rng(static_cast<std::uint64_t>(t) * 1000 + static_cast<std::uint64_t>(d));
  TokenSet tokens;
  tokens.cls = random_tensor({d}, rng);
  for (int p = 0; p < t - 1; ++p) tokens.positions.push_back(p);
  if (t > 1) tokens.patches = random_tensor({t - 1, d}, rng);
  MultiplyCounter counter;
  block_forward(m, tokens, 1);
  return counter.count();
}

}  // namespace

TEST_CASE("block count at unit sizes matches a hand count") {
  // 3 qkv + 1 proj + 2 mlp + 1 scores + 1 values + 5 norm/softmax + 4 per-score
  CHECK(block_flops(1, 1, 1, 1) == 17.0);
  // t=2, d=3, r=2: 3·18 + 18 + 4·18 + 2·4·3 + 5·6 + 4·4
  CHECK(block_flops(2, 3, 1, 2) == 54.0 + 18 + 72 + 24 + 30 + 16);
}

TEST_CASE("doubling d quadruples the quadratic terms") {
  const double t = 50, d = 96;
  auto quad = [&](double dd) { return block_flops(t, dd, 4, 4) - 2 * t * t * dd - 5 * t * dd - 4 * t * t; };
  CHECK(quad(2 * d) == 4 * quad(d));
}

TEST_CASE("block count matches an instrumented forward within 5%") {
  const int cases[][3] = {{5, 64, 4}, {17, 64, 4}, {65, 128, 4}, {197, 768, 12}};
  for (const auto& c : cases) {
    const double measured = static_cast<double>(measured_block(c[0], c[1], c[2]));
    const double model = block_flops(c[0], c[1], c[2], 4);
    INFO("t=" << c[0] << " d=" << c[1] << " measured=" << measured << " model=" << model);
    CHECK(within(model, measured, 0.05));
  }
}

TEST_CASE("episode count matches an instrumented toy episode within 5%") {
  const RunConfig rc = RunConfig::defaults();
  const Model m = Model::shaped(rc.model, rc.decoder);
  const GlimpseGrid grid(m.config);
  Rng rng(3);
  const Tensor img = random_image(m.config, rng);
  for (int kappa : {0, 3, 6}) {
    MultiplyCounter counter;
    ToreSession s(m, Split{kappa});
    for (int j = 0; j < 4; ++j) decode(m, s.observe(observe(img, m.config, grid.positions(j * 5), j * 5)).final_embeddings);
    const double measured = static_cast<double>(counter.count());
    const double model = episode_flops(ArchSpec::from(m.config), ArchSpec::from(m.decoder_config),
                                       RegimeSpec::from(m.config, 4), kappa, CostMode::cached).total;
    INFO("kappa=" << kappa << " measured=" << measured << " model=" << model);
    CHECK(within(model, measured, 0.05));
  }
}

TEST_CASE("sun360 table values") {
  const RegimeSpec sun = RegimeSpec::sun360();
  CHECK(within(gflops("vit-b", "decoder-light", sun, 0, CostMode::cached), 13.4, 0.10));
  CHECK(within(gflops("vit-b", "decoder-light", sun, 8, CostMode::cached), 7.0, 0.10));
  CHECK(within(gflops("vit-b", "decoder-mae", sun, 0, CostMode::naive), 38.8, 0.10));
  CHECK(within(gflops("vit-l", "decoder-mae", sun, 0, CostMode::naive), 71.9, 0.10));
}

TEST_CASE("std224 table values") {
  const RegimeSpec r = RegimeSpec::std224();
  CHECK(within(gflops("vit-b", "decoder-light", r, 0, CostMode::cached), 29.1, 0.10));
  CHECK(within(gflops("vit-b", "decoder-light", r, 7, CostMode::cached), 15.9, 0.10));
  CHECK(within(gflops("vit-b", "decoder-light", r, 6, CostMode::cached), 16.4, 0.10));
}

TEST_CASE("reduction against the large baseline") {
  const std::vector<TableRow> rows{{"vit-b", "decoder-light", "sun360", 0, CostMode::cached},
                                   {"vit-b", "decoder-light", "sun360", 8, CostMode::cached},
                                   {"vit-l", "decoder-mae", "sun360", 0, CostMode::naive}};
  const std::vector<TableEntry> t = table_report(rows, 2);
  CHECK(t[0].reduction_pct >= 80.0);
  CHECK(within(t[0].reduction_pct, 100.0 * (1 - 13.4 / 71.9), 0.05));
  CHECK(t[1].reduction_pct >= 85.0);
  CHECK(t[2].reduction_pct == 0.0);
  CHECK_THROWS(table_report(rows, 3));
}

TEST_CASE("kappa monotonicity in cached mode") {
  for (const RegimeSpec& r : {RegimeSpec::sun360(), RegimeSpec::std224()}) {
    FlopReport prev = episode_flops(ArchSpec::vit_b(), ArchSpec::decoder_light(), r, 0, CostMode::cached);
    for (int k = 1; k <= 12; ++k) {
      const FlopReport cur = episode_flops(ArchSpec::vit_b(), ArchSpec::decoder_light(), r, k, CostMode::cached);
      CHECK(cur.extractor > prev.extractor);
      CHECK(cur.aggregator < prev.aggregator);
      CHECK(cur.total <= prev.total);
      CHECK(cur.decoder == prev.decoder);
      prev = cur;
    }
  }
}

TEST_CASE("cached and naive agree at kappa 0") {
  for (const char* dec : {"decoder-light", "decoder-mae"}) {
    const FlopReport a = episode_flops(ArchSpec::vit_b(), ArchSpec::preset(dec), RegimeSpec::sun360(), 0, CostMode::cached);
    const FlopReport b = episode_flops(ArchSpec::vit_b(), ArchSpec::preset(dec), RegimeSpec::sun360(), 0, CostMode::naive);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
  }
}

TEST_CASE("report components sum to the total") {
  const FlopReport r = episode_flops(ArchSpec::vit_b(), ArchSpec::decoder_light(), RegimeSpec::sun360(), 4, CostMode::cached);
  CHECK(r.steps.size() == 8);
  double sum = 0;
  for (const StepFlops& s : r.steps) {
    CHECK(s.extractor >= 0);
    CHECK(s.aggregator >= 0);
    CHECK(s.decoder >= 0);
    sum += s.total();
  }
  CHECK(sum == doctest::Approx(r.total).epsilon(1e-12));
  CHECK(r.extractor + r.aggregator + r.decoder == doctest::Approx(r.total).epsilon(1e-12));
  CHECK(r.cumulative_gflops(8) == doctest::Approx(r.gflops()).epsilon(1e-12));
  CHECK(r.cumulative_gflops(1) < r.cumulative_gflops(2));
}

TEST_CASE("csv header and row count") {
  const std::vector<TableEntry> t = table_report(parse_rows("vit-b:decoder-light:0:cached,vit-l:decoder-mae:0:naive", "sun360"), 1);
  std::istringstream in(table_csv(t));
  std::string line, header;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = line;
    } else {
      ++rows;
    }
  }
  CHECK(header == "arch,decoder,regime,kappa,mode,extractor_gflops,aggregator_gflops,decoder_gflops,total_gflops,reduction_pct");
  CHECK(rows == 2);
  CHECK(table_markdown(t).find("| vit-l") != std::string::npos);
}

TEST_CASE("row specs and presets reject unknown names") {
  CHECK_THROWS_AS(parse_rows("vit-h:decoder-light:0:cached", "sun360"), UsageError);
  CHECK_THROWS_AS(parse_rows("vit-b:decoder-light:0", "sun360"), UsageError);
  CHECK_THROWS_AS(parse_rows("vit-b:decoder-light:0:eager", "sun360"), UsageError);
  CHECK_THROWS_AS(RegimeSpec::preset("imagenet"), UsageError);
  CHECK(ArchSpec::preset("vit-l").depth == 24);
}
