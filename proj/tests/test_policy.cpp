// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"

using namespace tore;
using namespace tore::testing;

namespace {

Tensor uniform_rows(int n) { return Tensor({n, n}, std::vector<float>(static_cast<std::size_t>(n) * n, 1.0f / static_cast<float>(n))); }

Tensor random_stochastic(int n, Rng& rng) {
  Tensor a({n, n});
  for (int r = 0; r < n; ++r) {
    double s = 0;
    for (auto& v : a.row(r)) s += (v = static_cast<float>(rng.uniform(0.0, 1.0)));
    for (auto& v : a.row(r)) v = static_cast<float>(v / s);
  }
  return a;
}

// Exhaustive argmax over candidate sums; the first maximum wins.
int brute_force_ame(const Tensor& h, const std::vector<int>& chosen, const GlimpseGrid& grid) {
  int best = -1;
  double best_score = -1;
  for (int g = 0; g < grid.size(); ++g) {
    if (std::find(chosen.begin(), chosen.end(), g) != chosen.end()) continue;
    double s = 0;
    for (int p : grid.positions(g)) {
      const int owner = grid.glimpse_of(p);
      if (std::find(chosen.begin(), chosen.end(), owner) == chosen.end()) s += h[static_cast<std::size_t>(p)];
    }
    if (s > best_score) best = g, best_score = s;
  }
  return best;
}

ModelConfig episode_config() {
  ModelConfig c = tiny_config();
  c.image_height = 16;
  c.image_width = 16;  // 8×8 tokens, 16 glimpses
  return c;
}

}  // namespace

TEST_CASE("glimpse grid tiles the token grid") {
  const GlimpseGrid grid(8, 16);
  CHECK(grid.rows() == 4);
  CHECK(grid.cols() == 8);
  std::multiset<int> seen;
  for (int g = 0; g < grid.size(); ++g) {
    const std::vector<int> pos = grid.positions(g);
    CHECK(pos.size() == 4);
    for (int p : pos) {
      seen.insert(p);
      CHECK(grid.glimpse_of(p) == g);
    }
  }
  CHECK(seen.size() == 128);
  CHECK(std::set<int>(seen.begin(), seen.end()).size() == 128);
  CHECK(grid.positions(0) == std::vector<int>{0, 1, 16, 17});
  CHECK(grid.positions(9) == std::vector<int>{34, 35, 50, 51});
  CHECK_THROWS_AS(grid.positions(32), RangeError);
  CHECK_THROWS_AS(GlimpseGrid(7, 8), ContractError);
}

TEST_CASE("glimpses cover about a quarter of the image in both regimes") {
  const double sun = 8.0 * 4 / GlimpseGrid(8, 16).token_rows() / 16;
  const double std224 = 12.0 * 4 / (14.0 * 14);
  CHECK((sun >= 0.24 && sun <= 0.26));
  CHECK((std224 >= 0.24 && std224 <= 0.26));
  CHECK(GlimpseGrid(14, 14).size() == 49);
}

TEST_CASE("entropy of uniform rows") {
  const Tensor h = entropy_map({uniform_rows(16)});
  CHECK(h.size() == 16);
  for (float v : h.data()) CHECK(std::abs(v - 4.0f) <= 1e-5);
  const Tensor h4 = entropy_map(std::vector<Tensor>(4, uniform_rows(128)));
  for (float v : h4.data()) CHECK(std::abs(v - 28.0f) <= 1e-4);
}

TEST_CASE("entropy of one-hot rows is zero") {
  Tensor a({16, 16});
  for (int r = 0; r < 16; ++r) a.at(r, (r * 5) % 16) = 1.0f;
  const Tensor h = entropy_map({a, a});
  for (float v : h.data()) CHECK(v == 0.0f);
}

TEST_CASE("entropy matches a direct double-precision sum") {
  Rng rng(1);
  const std::vector<Tensor> heads{random_stochastic(16, rng), random_stochastic(16, rng), random_stochastic(16, rng)};
  const Tensor h = entropy_map(heads);
  for (int i = 0; i < 16; ++i) {
    double ref = 0;
    for (const Tensor& a : heads)
      for (float v : a.row(i))
        if (v > 0) ref -= v * std::log2(static_cast<double>(v));
    CHECK(std::abs(h[static_cast<std::size_t>(i)] - ref) <= 1e-5);
    CHECK(h[static_cast<std::size_t>(i)] >= 0.0f);
    CHECK(h[static_cast<std::size_t>(i)] < 3 * 4.0f);
  }
}

TEST_CASE("entropy rejects non-stochastic rows") {
  Tensor a = uniform_rows(8);
  a.at(3, 0) += 0.01f;
  CHECK_THROWS_AS(entropy_map({a}), ContractError);
  Tensor b = uniform_rows(8);
  b.at(0, 0) = -0.1f;
  b.at(0, 1) += 0.1f;
  CHECK_THROWS_AS(entropy_map({b}), ContractError);
}

TEST_CASE("ame on a uniform map picks glimpse 0") {
  const GlimpseGrid grid(8, 8);
  const Tensor h({64}, std::vector<float>(64, 1.0f));
  CHECK(ame_select(h, PolicyState(), grid) == 0);
}

TEST_CASE("ame with single support picks its glimpse") {
  const GlimpseGrid grid(8, 8);
  Tensor h({64});
  h[static_cast<std::size_t>(grid.positions(5)[3])] = 0.5f;
  CHECK(ame_select(h, PolicyState(), grid) == 5);
}

TEST_CASE("ame matches an exhaustive oracle with three glimpses chosen") {
  const GlimpseGrid grid(8, 8);
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor h = random_tensor({64}, rng, 0.0, 10.0);
    PolicyState st;
    while (st.chosen.size() < 3) {
      const int g = rng.uniform_int(0, 15);
      if (!st.is_chosen(g)) st.chosen.push_back(g);
    }
    const int got = ame_select(h, st, grid);
    CHECK(got == brute_force_ame(h, st.chosen, grid));
    CHECK_FALSE(st.is_chosen(got));
  }
}

TEST_CASE("ame ignores chosen glimpses even with the largest entries") {
  const GlimpseGrid grid(8, 8);
  Tensor h({64}, std::vector<float>(64, 1.0f));
  for (int p : grid.positions(2)) h[static_cast<std::size_t>(p)] = 100.0f;
  PolicyState st;
  st.chosen = {2};
  CHECK(ame_select(h, st, grid) == 0);
  st.chosen = {0, 2};
  CHECK(ame_select(h, st, grid) == 1);
}

TEST_CASE("ame is invariant to positive rescaling") {
  const GlimpseGrid grid(8, 8);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    PolicyState a, b;
    const double s = rng.uniform(0.01, 100.0);
    for (int step = 0; step < 8; ++step) {
      const Tensor h = random_tensor({64}, rng, 0.0, 5.0);
      Tensor hs = h;
      for (auto& v : hs.data()) v = static_cast<float>(v * s);
      const int ga = ame_select(h, a, grid), gb = ame_select(hs, b, grid);
      CHECK(ga == gb);
      a.chosen.push_back(ga);
      b.chosen.push_back(gb);
    }
  }
}

TEST_CASE("max scoring picks the glimpse with the largest token") {
  const GlimpseGrid grid(4, 4);
  Tensor h({16}, std::vector<float>(16, 1.0f));
  for (int p : grid.positions(1)) h[static_cast<std::size_t>(p)] = 1.5f;
  h[static_cast<std::size_t>(grid.positions(3)[0])] = 3.0f;
  CHECK(ame_select(h, PolicyState(), grid, GlimpseScore::sum) == 1);
  CHECK(ame_select(h, PolicyState(), grid, GlimpseScore::max) == 3);
}

TEST_CASE("selection when exhausted") {
  const GlimpseGrid grid(4, 4);
  PolicyState st;
  st.chosen = {0, 1, 2, 3};
  CHECK_THROWS_AS(ame_select(Tensor({16}), st, grid), ExhaustionError);
  CHECK_THROWS_AS(random_select(st, grid), ExhaustionError);
}

TEST_CASE("random selection with one glimpse left") {
  const GlimpseGrid grid(4, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PolicyState st(seed);
    st.chosen = {3, 0, 1};
    CHECK(random_select(st, grid) == 2);
  }
}

TEST_CASE("random selection is uniform") {
  const GlimpseGrid grid(4, 8);
  REQUIRE(grid.size() == 8);
  PolicyState st(42);
  std::vector<int> counts(8, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(random_select(st, grid))];
  for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 0.125) <= 0.03);
}

TEST_CASE("random selection is deterministic per seed") {
  const GlimpseGrid grid(8, 8);
  PolicyState a(7), b(7);
  for (int i = 0; i < 16; ++i) {
    const int ga = random_select(a, grid), gb = random_select(b, grid);
    CHECK(ga == gb);
    a.chosen.push_back(ga);
    b.chosen.push_back(gb);
  }
}

TEST_CASE("single-step episode equals the forward on that glimpse") {
  const Model m = random_model(episode_config(), tiny_decoder(), 4);
  Rng rng(5);
  const Tensor img = random_image(m.config, rng);
  const GlimpseGrid grid(m.config);
  for (Policy pol : {Policy::ame, Policy::random}) {
    EpisodeOptions o;
    o.policy = pol;
    o.steps = 1;
    o.seed = 9;
    const EpisodeTrace t = run_episode(m, Split{1}, img, o);
    REQUIRE(t.steps.size() == 1);
    const std::vector<Glimpse> gs{observe(img, m.config, grid.positions(t.glimpses[0]), t.glimpses[0])};
    CHECK(t.steps[0].logits == tore_forward_direct(m, gs, Split{1}).logits);
    CHECK(t.steps[0].pred == kernels::argmax(t.steps[0].logits));
    CHECK(t.extraction_calls == 1);
  }
}

TEST_CASE("episodes are deterministic for a seed") {
  const Model m = random_model(episode_config(), tiny_decoder(), 6);
  Rng rng(7);
  const Tensor img = random_image(m.config, rng);
  for (Policy pol : {Policy::ame, Policy::random}) {
    EpisodeOptions o;
    o.policy = pol;
    o.steps = 5;
    o.seed = 123;
    const EpisodeTrace a = run_episode(m, Split{1}, img, o), b = run_episode(m, Split{1}, img, o);
    CHECK(a.glimpses == b.glimpses);
    for (std::size_t j = 0; j < a.steps.size(); ++j) {
      CHECK(a.steps[j].logits == b.steps[j].logits);
      CHECK(a.steps[j].entropy == b.steps[j].entropy);
      CHECK(a.steps[j].reconstruction == b.steps[j].reconstruction);
    }
  }
}

TEST_CASE("ame episodes follow the entropy argmax and never repeat") {
  const ModelConfig c = episode_config();
  const GlimpseGrid grid(c);
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const Model m = random_model(c, tiny_decoder(), 1000 + static_cast<std::uint64_t>(trial));
    const Tensor img = random_image(c, rng);
    EpisodeOptions o;
    o.steps = 4;
    o.seed = static_cast<std::uint64_t>(trial);
    const int kappa = trial % (c.depth + 1);
    const EpisodeTrace t = run_episode(m, Split{kappa}, img, o);
    CHECK(t.glimpses.size() == 4);
    CHECK(std::set<int>(t.glimpses.begin(), t.glimpses.end()).size() == 4);
    CHECK(std::set<int>(t.observed.begin(), t.observed.end()).size() == 16);
    CHECK(t.extraction_calls == 4);
    for (std::size_t j = 1; j < 4; ++j) {
      const std::vector<int> prior(t.glimpses.begin(), t.glimpses.begin() + static_cast<long>(j));
      CHECK(t.glimpses[j] == brute_force_ame(t.steps[j - 1].entropy, prior, grid));
    }
  }
}

TEST_CASE("episode entropy and predictions match recomputation") {
  const Model m = random_model(episode_config(), tiny_decoder(), 9);
  Rng rng(10);
  const Tensor img = random_image(m.config, rng);
  const GlimpseGrid grid(m.config);
  EpisodeOptions o;
  o.steps = 6;
  o.seed = 3;
  const EpisodeTrace t = run_episode(m, Split{2}, img, o);
  std::vector<Glimpse> gs;
  for (std::size_t j = 0; j < t.steps.size(); ++j) {
    gs.push_back(observe(img, m.config, grid.positions(t.glimpses[j]), t.glimpses[j]));
    const AggregateResult ref = tore_forward_direct(m, gs, Split{2});
    CHECK(max_abs(t.steps[j].logits, ref.logits) <= 1e-5);
    const DecodeResult dec = decode(m, ref.final_embeddings);
    CHECK(max_abs(t.steps[j].entropy, entropy_map(dec.attention)) <= 1e-4);
    CHECK(max_abs(t.steps[j].reconstruction, dec.reconstruction) <= 1e-5);
    for (float v : t.steps[j].entropy.data()) CHECK((v >= 0.0f && v <= 2 * 6.0f + 1e-5f));
    if (j > 0) CHECK(t.steps[j].gflops_cum > t.steps[j - 1].gflops_cum);
  }
  CHECK(max_abs(replay_glimpses(m, Split{2}, img, t.glimpses), t.steps.back().logits) <= 1e-6);
}

TEST_CASE("center cold start") {
  const Model m = random_model(episode_config(), tiny_decoder(), 11);
  Rng rng(12);
  EpisodeOptions o;
  o.steps = 2;
  o.cold_start = ColdStart::center;
  const EpisodeTrace t = run_episode(m, Split{0}, random_image(m.config, rng), o);
  CHECK(t.glimpses[0] == GlimpseGrid(m.config).center());
  o.steps = 17;
  CHECK_THROWS_AS(run_episode(m, Split{0}, random_image(m.config, rng), o), RangeError);
}

TEST_CASE("policy names parse") {
  CHECK(parse_policy("ame") == Policy::ame);
  CHECK(parse_policy("random") == Policy::random);
  CHECK(parse_cold_start("center") == ColdStart::center);
  CHECK(parse_glimpse_score("max") == GlimpseScore::max);
  CHECK_THROWS_AS(parse_policy("greedy"), UsageError);
}
