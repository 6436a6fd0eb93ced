// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/flops.hpp"

#include <cstdio>
#include <sstream>

#include "tore/errors.hpp"

namespace tore {

ArchSpec ArchSpec::preset(const std::string& name) {
  for (const auto& a : {vit_b(), vit_l(), decoder_light(), decoder_mae()}) {
    if (a.name == name) return a;
  }
  throw UsageError("unknown architecture preset '" + name + "'");
}

RegimeSpec RegimeSpec::preset(const std::string& name) {
  for (const auto& r : {sun360(), std224()}) {
    if (r.name == name) return r;
  }
  throw UsageError("unknown regime preset '" + name + "'");
}

const char* to_string(CostMode m) { return m == CostMode::cached ? "cached" : "naive"; }

CostMode parse_cost_mode(const std::string& s) {
  if (s == "cached") return CostMode::cached;
  if (s == "naive") return CostMode::naive;
  throw UsageError("unknown cost mode '" + s + "' (expected cached|naive)");
}

double block_flops(double t, double d, int /*num_heads*/, int mlp_ratio) {
  const double dense = 3 * t * d * d + t * d * d + 2.0 * mlp_ratio * t * d * d;
  const double attention = 2 * t * t * d;
  const double minor = 5 * t * d + 4 * t * t;
  return dense + attention + minor;
}

double FlopReport::cumulative_gflops(int step) const {
  double s = 0;
  for (int i = 0; i < step && i < static_cast<int>(steps.size()); ++i) s += steps[static_cast<std::size_t>(i)].total();
  return s / 1e9;
}

FlopReport episode_flops(const ArchSpec& arch, const ArchSpec& dec, const RegimeSpec& regime, int kappa, CostMode mode) {
  if (kappa < 0 || kappa > arch.depth) throw RangeError("episode_flops: kappa outside [0, depth]");
  if (arch.patch_size <= 0 || regime.image_height % arch.patch_size || regime.image_width % arch.patch_size) {
    throw ContractError("episode_flops: image size must be divisible by the patch size");
  }
  const double d = arch.embed_dim, dd = dec.embed_dim;
  const double grid = static_cast<double>(regime.image_height / arch.patch_size) * (regime.image_width / arch.patch_size);
  const double pixels = static_cast<double>(arch.patch_size) * arch.patch_size * regime.channels;
  const double per_glimpse = static_cast<double>(regime.span) * regime.span;

  const double tokenize = per_glimpse * pixels * d;
  const double head = 5 * d + d * regime.num_classes;
  auto blocks = [](const ArchSpec& a, double t, int count) { return count * block_flops(t, a.embed_dim, a.num_heads, a.mlp_ratio); };

  FlopReport r;
  for (int j = 1; j <= regime.glimpses; ++j) {
    const double t = per_glimpse * j + 1;
    StepFlops s;
    if (mode == CostMode::cached) {
      s.extractor = tokenize + blocks(arch, per_glimpse + 1, kappa);
      s.aggregator = blocks(arch, t, arch.depth - kappa) + head;
    } else {
      s.extractor = tokenize;
      s.aggregator = blocks(arch, t, arch.depth) + head;
    }
    // projection of observed tokens, decoder blocks on the full grid, final norm, pixel head
    s.decoder = per_glimpse * j * d * dd + blocks(dec, grid, dec.depth) + 5 * grid * dd + grid * dd * pixels;
    r.extractor += s.extractor;
    r.aggregator += s.aggregator;
    r.decoder += s.decoder;
    r.steps.push_back(s);
  }
  r.total = r.extractor + r.aggregator + r.decoder;
  return r;
}

std::vector<TableEntry> table_report(const std::vector<TableRow>& rows, std::size_t baseline) {
  if (rows.empty()) return {};
  if (baseline >= rows.size()) throw RangeError("table_report: baseline row index out of range");
  std::vector<TableEntry> out;
  for (const auto& row : rows) {
    out.push_back({row,
                   episode_flops(ArchSpec::preset(row.arch), ArchSpec::preset(row.decoder), RegimeSpec::preset(row.regime),
                                 row.kappa, row.mode),
                   0});
  }
  const double base = out[baseline].report.total;
  for (auto& e : out) e.reduction_pct = base > 0 ? 100.0 * (1.0 - e.report.total / base) : 0.0;
  return out;
}

namespace {

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

std::string table_csv(const std::vector<TableEntry>& entries) {
  std::ostringstream os;
  os << "# cost model: 1 multiply-accumulate = 1 FLOP; decoder runs over the full token grid every step\n";
  os << "arch,decoder,regime,kappa,mode,extractor_gflops,aggregator_gflops,decoder_gflops,total_gflops,reduction_pct\n";
  for (const auto& e : entries) {
    os << e.row.arch << ',' << e.row.decoder << ',' << e.row.regime << ',' << e.row.kappa << ',' << to_string(e.row.mode)
       << ',' << fmt(e.report.extractor / 1e9, 4) << ',' << fmt(e.report.aggregator / 1e9, 4) << ','
       << fmt(e.report.decoder / 1e9, 4) << ',' << fmt(e.report.total / 1e9, 4) << ',' << fmt(e.reduction_pct, 2)
       << '\n';
  }
  return os.str();
}

std::string table_markdown(const std::vector<TableEntry>& entries) {
  std::ostringstream os;
  os << "| arch | decoder | regime | kappa | mode | extractor | aggregator | decoder | total GFLOPs | reduction % |\n";
  os << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& e : entries) {
    os << "| " << e.row.arch << " | " << e.row.decoder << " | " << e.row.regime << " | " << e.row.kappa << " | "
       << to_string(e.row.mode) << " | " << fmt(e.report.extractor / 1e9, 2) << " | "
       << fmt(e.report.aggregator / 1e9, 2) << " | " << fmt(e.report.decoder / 1e9, 2) << " | "
       << fmt(e.report.total / 1e9, 2) << " | " << fmt(e.reduction_pct, 1) << " |\n";
  }
  return os.str();
}

std::vector<TableRow> parse_rows(const std::string& spec, const std::string& regime) {
  RegimeSpec::preset(regime);
  std::vector<TableRow> rows;
  std::istringstream all(spec);
  std::string item;
  while (std::getline(all, item, ',')) {
    if (item.empty()) continue;
    std::vector<std::string> f;
    std::istringstream is(item);
    std::string part;
    while (std::getline(is, part, ':')) f.push_back(part);
    if (f.size() != 4) throw UsageError("row '" + item + "' must look like arch:decoder:kappa:mode");
    TableRow r;
    r.arch = f[0];
    r.decoder = f[1];
    r.regime = regime;
    try {
      std::size_t used = 0;
      r.kappa = std::stoi(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument(f[2]);
    } catch (const std::logic_error&) {
      throw UsageError("row '" + item + "': kappa must be an integer");
    }
    r.mode = parse_cost_mode(f[3]);
    const ArchSpec a = ArchSpec::preset(r.arch);
    ArchSpec::preset(r.decoder);
    if (r.kappa < 0 || r.kappa > a.depth) throw UsageError("row '" + item + "': kappa outside [0, depth]");
    rows.push_back(r);
  }
  if (rows.empty()) throw UsageError("no rows given");
  return rows;
}

}  // namespace tore
