// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

// tore: train, explore, eval, bench-flops, ablate.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "tore/config.hpp"

namespace fs = std::filesystem;
using namespace tore;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::vector<std::string> overrides;  // key=value
};

RunConfig resolve(const Common& c) {
  RunConfig rc = RunConfig::defaults();
  if (!c.config_path.empty()) rc.load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    rc.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    rc.seed = *c.seed;
  } else if (const char* env = std::getenv("TORE_SEED"); env && *env) {
    rc.apply("seed", env);
  }
  if (c.jobs < 1) throw UsageError("--jobs must be at least 1");
  return rc;
}

std::string comment_block(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) os << "# " << line << '\n';
  return os.str();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void ensure_dir(const fs::path& p) {
  if (!p.empty()) fs::create_directories(p);
}

/// Evaluation/training data: DIR (with optional train/ val/ test/ subdirectories) or the synthetic set.
Dataset load_data(const RunConfig& rc, const std::string& dir, bool synthetic) {
  if (synthetic) return generate_synthetic(rc.synthetic, rc.seed);
  if (dir.empty()) throw UsageError("one of --data or --synthetic is required");
  const fs::path root(dir);
  Dataset d;
  const int classes = rc.model.num_classes, ch = rc.model.channels;
  if (fs::exists(root / "train" / "labels.csv")) {
    d.train = load_dataset(root / "train", classes, ch);
    if (fs::exists(root / "val" / "labels.csv")) d.val = load_dataset(root / "val", classes, ch);
    if (fs::exists(root / "test" / "labels.csv")) d.test = load_dataset(root / "test", classes, ch);
  } else {
    d.train = load_dataset(root, classes, ch);
    d.test = d.train;
  }
  return d;
}

std::vector<Sample> eval_split(const Dataset& d) { return d.test.empty() ? d.train : d.test; }

Model load_model_for(const std::string& ckpt, RunConfig& rc) {
  Model m = load_checkpoint(ckpt);
  rc.model = m.config;
  rc.decoder = m.decoder_config;
  rc.synthetic.num_classes = m.config.num_classes;
  rc.synthetic.height = m.config.image_height;
  rc.synthetic.width = m.config.image_width;
  rc.synthetic.channels = m.config.channels;
  return m;
}

FitResult run_fit(const RunConfig& rc, const Dataset& data) {
  return fit(rc.model, rc.decoder, data, rc.train_config(), [](const EpochLog& e) {
    std::fprintf(stderr, "epoch %d  train %.4f  val %.4f  acc %.3f  lr %.3g\n", e.epoch, e.train_loss, e.val_loss,
                 e.val_acc, e.lr);
  });
}

// ---------------------------------------------------------------------------

int cmd_train(Common& c, const std::string& data_dir, bool synthetic, const std::string& out, const std::string& log_path) {
  RunConfig rc = resolve(c);
  rc.validate();
  const Dataset data = load_data(rc, data_dir, synthetic);
  FitResult f = run_fit(rc, data);
  const fs::path ckpt(out);
  ensure_dir(ckpt.parent_path());
  save_checkpoint(f.model, ckpt);
  const fs::path log = log_path.empty() ? ckpt.parent_path() / "train_log.csv" : fs::path(log_path);
  write_file(log, format_train_log(f.log, rc.serialize()));
  std::printf("best_epoch=%d best_val_loss=%.6f epochs_run=%zu\n", f.best_epoch, f.best_val_loss, f.log.size());
  return 0;
}

int cmd_explore(Common& c, const std::string& ckpt, const std::string& image_path, const std::string& emit,
                const std::optional<std::string>& policy, const std::optional<int>& kappa, const std::optional<int>& steps) {
  RunConfig rc = resolve(c);
  const Model model = load_model_for(ckpt, rc);
  if (policy) rc.policy = parse_policy(*policy);
  if (kappa) rc.kappa = *kappa;
  if (steps) rc.steps = *steps;
  rc.validate();
  const Tensor image = read_image(image_path, model.config.channels);
  if (image.dim(0) != model.config.image_height || image.dim(1) != model.config.image_width) {
    throw UsageError("image is " + std::to_string(image.dim(1)) + "x" + std::to_string(image.dim(0)) +
                     ", the model expects " + std::to_string(model.config.image_width) + "x" +
                     std::to_string(model.config.image_height));
  }
  const EpisodeOptions opt{rc.policy, rc.steps, rc.seed, rc.cold_start, rc.score};
  const EpisodeTrace t = run_episode(model, Split{rc.kappa}, image, opt);

  const fs::path dir(emit);
  ensure_dir(dir);
  const ModelConfig& mc = model.config;
  const GlimpseGrid grid(mc);
  const double scale = 255.0 / (model.decoder_config.num_heads * std::log2(static_cast<double>(mc.grid_size())));
  std::ostringstream trace;
  trace << comment_block(rc.serialize());
  trace << "step,glimpse_index,pred_class,pred_conf,entropy_max,gflops_cum\n";
  std::vector<char> fov(static_cast<std::size_t>(mc.grid_size()), 0);
  for (std::size_t j = 0; j < t.steps.size(); ++j) {
    const EpisodeStep& s = t.steps[j];
    for (int p : grid.positions(s.glimpse)) fov[static_cast<std::size_t>(p)] = 1;
    char stem[32];
    std::snprintf(stem, sizeof stem, "step_%02zu", j + 1);
    Pixmap ent{mc.grid_cols(), mc.grid_rows(), 1, {}};
    float emax = 0;
    for (float v : s.entropy.data()) {
      emax = std::max(emax, v);
      ent.bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v * scale, 0.0, 255.0))));
    }
    write_pnm(dir / (std::string(stem) + "_entropy.pgm"), ent);
    Pixmap mask{mc.image_width, mc.image_height, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(mc.image_width) * mc.image_height)};
    for (int y = 0; y < mc.image_height; ++y)
      for (int x = 0; x < mc.image_width; ++x) {
        const int p = (y / mc.patch_size) * mc.grid_cols() + x / mc.patch_size;
        mask.bytes[static_cast<std::size_t>(y) * mc.image_width + x] = fov[static_cast<std::size_t>(p)] ? 255 : 0;
      }
    write_pnm(dir / (std::string(stem) + "_fov.pgm"), mask);
    Tensor recon = assemble_image(s.reconstruction, mc);
    if (mc.channels == 1 || mc.channels == 3) write_image(dir / (std::string(stem) + "_recon.ppm"), recon);
    trace << j + 1 << ',' << s.glimpse << ',' << s.pred << ',' << fmt("%.6f", s.conf) << ',' << fmt("%.6f", emax) << ','
          << fmt("%.6f", s.gflops_cum) << '\n';
  }
  write_file(dir / "trace.csv", trace.str());
  write_file(dir / "run_config.txt", rc.serialize());
  std::printf("steps=%zu final_pred=%d extraction_calls=%d\n", t.steps.size(), t.steps.back().pred, t.extraction_calls);
  return 0;
}

int cmd_eval(Common& c, const std::string& ckpt, const std::string& data_dir, bool synthetic,
             const std::optional<std::string>& policy, const std::optional<int>& kappa, const std::optional<int>& steps) {
  RunConfig rc = resolve(c);
  const Model model = load_model_for(ckpt, rc);
  if (policy) rc.policy = parse_policy(*policy);
  if (kappa) rc.kappa = *kappa;
  if (steps) rc.steps = *steps;
  rc.validate();
  const Dataset data = load_data(rc, data_dir, synthetic);
  const std::vector<Sample> samples = eval_split(data);
  const EvalResult r = evaluate(model, samples, rc.eval_options(c.jobs));
  std::printf("policy,kappa,steps,samples,accuracy,rmse,gflops\n%s,%d,%d,%d,%s,%s,%s\n", to_string(rc.policy), rc.kappa,
              rc.steps, r.samples, fmt("%.6f", r.accuracy).c_str(), fmt("%.6f", r.rmse).c_str(),
              fmt("%.6f", r.gflops).c_str());
  return 0;
}

int cmd_bench(const std::string& preset, const std::string& rows_spec, int baseline, const std::string& format,
              const std::string& out) {
  std::string spec = rows_spec;
  const RegimeSpec regime = RegimeSpec::preset(preset);
  if (spec.empty()) {
    spec = preset == "sun360" ? "vit-b:decoder-light:0:cached,vit-b:decoder-light:8:cached,vit-b:decoder-mae:0:naive,vit-l:decoder-mae:0:naive"
                              : "vit-b:decoder-light:0:cached,vit-b:decoder-light:6:cached,vit-b:decoder-light:7:cached,vit-b:decoder-mae:0:naive";
  }
  const auto rows = parse_rows(spec, regime.name);
  const std::size_t base = baseline < 0 ? rows.size() - 1 : static_cast<std::size_t>(baseline);
  if (base >= rows.size()) throw UsageError("--baseline index out of range");
  const auto table = table_report(rows, base);
  std::string text;
  if (format == "csv") text = table_csv(table);
  else if (format == "markdown") text = table_markdown(table);
  else throw UsageError("--format must be csv or markdown");
  if (out.empty()) std::fputs(text.c_str(), stdout);
  else write_file(out, text);
  return 0;
}

int cmd_ablate(Common& c, const std::string& mode, const std::string& data_dir, bool synthetic, const std::string& ckpt,
               const std::string& out_dir) {
  if (mode != "fixed-vs-random" && mode != "step-curve" && mode != "cross-policy") {
    throw UsageError("unknown --mode '" + mode + "' (expected fixed-vs-random|step-curve|cross-policy)");
  }
  RunConfig rc = resolve(c);
  std::optional<Model> model;
  if (!ckpt.empty() && mode != "fixed-vs-random") model = load_model_for(ckpt, rc);
  rc.validate();
  const Dataset data = load_data(rc, data_dir, synthetic);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  std::ostringstream csv;
  csv << comment_block(rc.serialize());
  EvalOptions eo = rc.eval_options(c.jobs);
  if (mode == "fixed-vs-random") {
    Dataset d = data;
    if (d.test.empty()) d.test = d.train;
    const auto rows = fixed_vs_random(rc.model, rc.decoder, d, rc.train_config(), eo);
    csv << "training,kappa_eval,accuracy\n";
    for (const auto& r : rows) csv << r.training << ',' << r.kappa_eval << ',' << fmt("%.6f", r.accuracy) << '\n';
    write_file(dir / "fixed_vs_random.csv", csv.str());
    return 0;
  }
  if (!model) model = run_fit(rc, data).model;
  const std::vector<Sample> samples = eval_split(data);
  const std::vector<int> kappas = rc.kappas();
  if (mode == "step-curve") {
    const StepCurve sc = step_curve_eval(*model, samples, kappas, eo);
    csv << "kappa,step,accuracy\n";
    for (std::size_t i = 0; i < sc.kappas.size(); ++i)
      for (std::size_t j = 0; j < sc.accuracy[i].size(); ++j)
        csv << sc.kappas[i] << ',' << j + 1 << ',' << fmt("%.6f", sc.accuracy[i][j]) << '\n';
    write_file(dir / "step_curve.csv", csv.str());
  } else {
    csv << "policy,gather_kappa,predict_kappa,accuracy\n";
    for (int g : kappas)
      for (int p : kappas) {
        eo.policy = Policy::ame;
        csv << "ame," << g << ',' << p << ',' << fmt("%.6f", cross_policy_eval(*model, samples, g, p, eo)) << '\n';
      }
    for (int p : kappas) {
      eo.policy = Policy::random;
      csv << "random," << p << ',' << p << ',' << fmt("%.6f", cross_policy_eval(*model, samples, p, p, eo)) << '\n';
    }
    write_file(dir / "cross_policy.csv", csv.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token recycling for active visual exploration"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "seed (falls back to TORE_SEED)");
    sub->add_option("--jobs", common.jobs, "worker threads for evaluation");
    sub->add_option("--set", common.overrides, "override one key=value setting");
  };

  std::string data_dir, out, log_path, ckpt, image, emit, preset = "sun360", rows, format = "csv", mode;
  bool synthetic = false;
  int baseline = -1;
  std::optional<std::string> policy;
  std::optional<int> kappa, steps;

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  auto* train_data = train->add_option("--data", data_dir, "dataset directory");
  train->add_flag("--synthetic", synthetic, "use the synthetic shapes dataset")->excludes(train_data);
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--log", log_path, "training log path (default: train_log.csv next to the checkpoint)");

  auto* explore = app.add_subcommand("explore", "run one exploration episode and emit artifacts");
  add_common(explore);
  explore->add_option("--ckpt", ckpt)->required();
  explore->add_option("--image", image)->required();
  explore->add_option("--policy", policy, "ame|random");
  explore->add_option("--kappa", kappa);
  explore->add_option("--steps", steps);
  explore->add_option("--emit", emit)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--ckpt", ckpt)->required();
  auto* eval_data = eval->add_option("--data", data_dir);
  eval->add_flag("--synthetic", synthetic)->excludes(eval_data);
  eval->add_option("--policy", policy, "ame|random");
  eval->add_option("--kappa", kappa);
  eval->add_option("--steps", steps);

  auto* bench = app.add_subcommand("bench-flops", "analytical GFLOPs table");
  bench->add_option("--preset", preset, "sun360|std224");
  bench->add_option("--rows", rows, "arch:decoder:kappa:mode,...");
  bench->add_option("--baseline", baseline, "row index for the reduction column (default: last)");
  bench->add_option("--format", format, "csv|markdown");
  bench->add_option("--out", out, "output path (default: stdout)");

  auto* ablate = app.add_subcommand("ablate", "ablation harnesses");
  add_common(ablate);
  ablate->add_option("--mode", mode, "fixed-vs-random|step-curve|cross-policy")->required();
  auto* ablate_data = ablate->add_option("--data", data_dir);
  ablate->add_flag("--synthetic", synthetic)->excludes(ablate_data);
  ablate->add_option("--ckpt", ckpt, "trained model (otherwise one is trained)");
  ablate->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(common, data_dir, synthetic, out, log_path);
    if (*explore) return cmd_explore(common, ckpt, image, emit, policy, kappa, steps);
    if (*eval) return cmd_eval(common, ckpt, data_dir, synthetic, policy, kappa, steps);
    if (*bench) return cmd_bench(preset, rows, baseline, format, out);
    if (*ablate) return cmd_ablate(common, mode, data_dir, synthetic, ckpt, out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
