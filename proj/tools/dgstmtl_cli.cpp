#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dgstmtl/checkpoint.hpp"
#include "dgstmtl/data.hpp"
#include "dgstmtl/grad_check.hpp"
#include "dgstmtl/kernels.hpp"
#include "dgstmtl/model.hpp"
#include "dgstmtl/ops.hpp"

namespace fs = std::filesystem;
using namespace dgstmtl;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
constexpr int kOk = 0, kUsage = 1, kData = 2, kNumeric = 3;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct TrainFlags {
  std::string manifest;
  std::string out_dir;
  TrainConfig cfg;
  std::vector<double> beta, alpha, delta;
  std::string prior_layout = "P1";
  std::string variant = "full";
  std::string corr_mode = "abs";
  std::string dump_priors;
  std::string dump_hybrid;
};

void apply_parsed(TrainFlags& f) {
  f.cfg.prior_layout = layout_from_name(f.prior_layout);
  f.cfg.variant = variant_from_name(f.variant);
  f.cfg.corr_mode = correlation_mode_from_name(f.corr_mode);
  f.cfg.validate();
}

LossConfig resolve_loss(const TrainFlags& f, int tasks) {
  LossConfig loss = LossConfig::defaults(tasks);
  if (!f.beta.empty()) {
    if (int(f.beta.size()) != tasks)
      throw ConfigError("--beta needs one value per task");
    double s = 0.0;
    for (double b : f.beta) {
      if (b < 0.0) throw ConfigError("--beta values must be nonnegative");
      s += b;
    }
    if (s <= 0.0) throw ConfigError("--beta values must not all be zero");
    loss.beta.clear();
    for (double b : f.beta) loss.beta.push_back(b / s);  // normalized to sum 1
  }
  if (!f.alpha.empty()) {
    if (int(f.alpha.size()) != tasks)
      throw ConfigError("--alpha needs one value per task");
    loss.alpha = f.alpha;
  }
  if (!f.delta.empty()) {
    if (int(f.delta.size()) != tasks)
      throw ConfigError("--delta needs one value per task");
    loss.delta = f.delta;
  }
  loss.validate(tasks);
  return loss;
}

json config_json(const Model& model, const Manifest& manifest,
                 const std::string& manifest_path, const std::string& out_dir) {
  json j;
  j["manifest"] = manifest_path;
  j["output_dir"] = out_dir;
  j["kernel_backend"] = kernels::backend_name(kernels::active_backend());
  j["ratios"] = manifest.ratios;
  j["dims"] = {{"n", model.dims.n},       {"t", model.dims.t},
               {"k", model.dims.k},       {"c", model.dims.c},
               {"c_prime", model.dims.c_prime}, {"m", model.dims.m},
               {"d", model.dims.d}};
  j["train"] = {{"batch_size", model.cfg.batch_size},
                {"learning_rate", model.cfg.learning_rate},
                {"hidden_dim", model.cfg.hidden_dim},
                {"gcn_layers", model.cfg.gcn_layers},
                {"max_epochs", model.cfg.max_epochs},
                {"patience", model.cfg.patience},
                {"seed", model.cfg.seed},
                {"prior_layout", layout_name(model.cfg.prior_layout)},
                {"variant", variant_name(model.cfg.variant)},
                {"history", model.cfg.history},
                {"ctke_dim", model.cfg.ctke_dim},
                {"corr_threshold", model.cfg.corr_threshold},
                {"corr_mode", correlation_mode_name(model.cfg.corr_mode)},
                {"gate_l1", model.cfg.gate_l1}};
  j["loss"] = {{"beta", model.loss_cfg.beta},
               {"alpha", model.loss_cfg.alpha},
               {"delta", model.loss_cfg.delta}};
  j["tasks"] = model.task_names;
  return j;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
}

void dump_priors(const Model& model, const std::string& dir) {
  fs::create_directories(dir);
  write_matrix_csv((fs::path(dir) / "a_s.csv").string(), model.basics.a_s);
  write_matrix_csv((fs::path(dir) / "a_t.csv").string(), model.basics.a_t);
  write_matrix_csv((fs::path(dir) / "a_st.csv").string(), model.basics.a_st);
  write_matrix_csv((fs::path(dir) / "a_p.csv").string(), model.prior.a_p);
}

void dump_hybrid(const Model& model, const DatasetSplits& splits,
                 const std::string& dir) {
  if (!variant_uses_adjacency(model.cfg.variant))
    throw ConfigError("--dump-hybrid: this variant uses no adjacency");
  const WindowedSplit& src = splits.val.samples > 0 ? splits.val : splits.train;
  if (src.samples < 1) throw InputError("--dump-hybrid: no sample available");
  NoGradGuard ng;
  fs::create_directories(dir);
  Tensor dyn;
  if (variant_uses_dynamic(model.cfg.variant)) {
    std::vector<Tensor> inputs;
    for (int k = 0; k < model.dims.k; ++k)
      inputs.push_back(sample_input(src, k, 0));
    dyn = dynamic_matrix(embed(concat_tasks(inputs), model.params.ctke->emb),
                         *model.params.ctke, model.dims);
  }
  for (int k = 0; k < model.dims.k; ++k) {
    Tensor a = effective_adjacency(
        adjacency_mode_for(model.cfg.variant), model.prior, dyn,
        variant_uses_gates(model.cfg.variant) ? &model.params.gates : nullptr, k);
    const std::string name = model.task_names.empty()
                                 ? "task_" + std::to_string(k)
                                 : model.task_names[std::size_t(k)];
    write_matrix_csv((fs::path(dir) / ("hybrid_" + name + ".csv")).string(), a);
  }
}

int cmd_synth(const std::string& out_dir, int nodes, int length, double coupling,
              std::uint64_t seed) {
  fs::create_directories(out_dir);
  const SynthResult synth = synth_coupled(nodes, length, coupling, seed);
  const fs::path base(out_dir);
  write_series_csv((base / "flow.csv").string(), synth.task_a);
  write_series_csv((base / "speed.csv").string(), synth.task_b);
  write_edge_list_csv((base / "edges.csv").string(), synth.edges);
  Manifest m;
  m.tasks = {{"flow", "flow.csv"}, {"speed", "speed.csv"}};
  m.edges_path = "edges.csv";
  m.interval_minutes = 5;
  m.ratios = {0.6, 0.2, 0.2};
  write_manifest((base / "manifest.txt").string(), m);
  std::cout << "wrote " << nodes << "-node, " << length
            << "-step coupled dataset to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const TrainFlags& flags) {
  const auto started = std::chrono::steady_clock::now();
  const Manifest manifest = load_manifest(flags.manifest);
  const LoadedData data = load_from_manifest(manifest);
  const LossConfig loss = resolve_loss(flags, int(data.tasks.size()));

  fs::create_directories(flags.out_dir);
  DatasetSplits splits =
      window_and_split(data.tasks, flags.cfg.history, manifest.ratios);
  for (const auto& w : splits.warnings) std::cerr << "warning: " << w << "\n";
  Model model = build_model(data, flags.cfg, loss, manifest.ratios);

  const TrainResult result = train_model(model, splits);

  const fs::path base(flags.out_dir);
  save_checkpoint(model, (base / "checkpoint.bin").string());
  {
    std::string trace = "epoch,train_loss,val_loss\n";
    for (const auto& row : result.trace)
      trace += std::to_string(row.epoch) + "," + fmt(row.train_loss) + "," +
               fmt(row.val_loss) + "\n";
    write_text((base / "trace.csv").string(), trace);
  }
  write_text((base / "config.json").string(),
             config_json(model, manifest, flags.manifest, flags.out_dir).dump(2) +
                 "\n");
  if (!flags.dump_priors.empty()) dump_priors(model, flags.dump_priors);
  if (!flags.dump_hybrid.empty()) dump_hybrid(model, splits, flags.dump_hybrid);

  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  {
    // the one output with wall-clock content, kept out of the data files
    const auto stamp = std::chrono::system_clock::now().time_since_epoch();
    const auto secs =
        std::chrono::duration_cast<std::chrono::seconds>(stamp).count();
    std::ofstream log(base / "run.log");
    log << "finished_at_unix=" << secs << "\n"
        << "elapsed_seconds=" << elapsed << "\n"
        << "epochs=" << result.trace.size() << "\n";
  }
  std::cout << "trained " << result.trace.size() << " epochs; best epoch "
            << result.best_epoch << " (val loss " << fmt(result.best_val_loss)
            << ")\ncheckpoint: " << (base / "checkpoint.bin").string() << "\n";
  return kOk;
}

DatasetSplits splits_for_model(const Model& model, const Manifest& manifest,
                               const LoadedData& data) {
  if (data.n != model.dims.n || int(data.tasks.size()) != model.dims.k)
    throw DataError("checkpoint was trained on " + std::to_string(model.dims.n) +
                    " nodes / " + std::to_string(model.dims.k) +
                    " tasks but the manifest provides " + std::to_string(data.n) +
                    " / " + std::to_string(data.tasks.size()));
  return window_and_split(data.tasks, model.cfg.history, manifest.ratios,
                          &model.scalers);
}

const WindowedSplit& pick_split(const DatasetSplits& splits,
                                const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw ConfigError("unknown split '" + name + "'");
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split, const std::string& out_path,
             const std::string& hybrid_dir) {
  Model model = load_checkpoint(checkpoint);
  const Manifest manifest = load_manifest(manifest_path);
  const LoadedData data = load_from_manifest(manifest);
  const DatasetSplits splits = splits_for_model(model, manifest, data);
  const MetricsReport report = evaluate(model, pick_split(splits, split));

  std::string csv = "task,mse,rmse,mae,mape\n";
  for (const auto& tm : report.per_task)
    csv += tm.task + "," + fmt(tm.mse) + "," + fmt(tm.rmse) + "," + fmt(tm.mae) +
           "," + fmt(tm.mape) + "\n";
  if (out_path.empty())
    std::cout << csv;
  else {
    write_text(out_path, csv);
    std::cout << csv;
  }
  if (!hybrid_dir.empty()) dump_hybrid(model, splits, hybrid_dir);
  return kOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& manifest_path,
                const std::string& split, const std::string& out_path, int limit) {
  Model model = load_checkpoint(checkpoint);
  const Manifest manifest = load_manifest(manifest_path);
  const LoadedData data = load_from_manifest(manifest);
  const DatasetSplits splits = splits_for_model(model, manifest, data);
  const WindowedSplit& chosen = pick_split(splits, split);
  if (chosen.samples < 1) throw InputError("predict: split '" + split + "' is empty");

  const int count = limit > 0 ? std::min(limit, chosen.samples) : chosen.samples;
  NoGradGuard ng;
  std::string csv = "sample,node,task,y_true,y_pred\n";
  constexpr int kChunk = 64;
  const auto targets = chosen.targets.values();
  for (int start = 0; start < count; start += kChunk) {
    const int batch_count = std::min(kChunk, count - start);
    std::vector<std::vector<Tensor>> batch(static_cast<std::size_t>(batch_count));
    for (int s = 0; s < batch_count; ++s)
      for (int k = 0; k < model.dims.k; ++k)
        batch[std::size_t(s)].push_back(sample_input(chosen, k, start + s));
    const Tensor pred = forward(model, batch);
    const auto pv = pred.values();
    for (int s = 0; s < batch_count; ++s)
      for (int node = 0; node < model.dims.n; ++node)
        for (int k = 0; k < model.dims.k; ++k) {
          const Scaler& sc = model.scalers[std::size_t(k)];
          const std::size_t goff =
              (std::size_t(start + s) * model.dims.n + node) *
                  std::size_t(model.dims.k) + k;
          const std::size_t poff =
              (std::size_t(s) * model.dims.n + node) * std::size_t(model.dims.k) + k;
          csv += std::to_string(start + s) + "," + std::to_string(node) + "," +
                 model.task_names[std::size_t(k)] + "," +
                 fmt(denormalize_value(targets[goff], sc)) + "," +
                 fmt(denormalize_value(pv[poff], sc)) + "\n";
        }
  }
  if (out_path.empty())
    std::cout << csv;
  else
    write_text(out_path, csv);
  return kOk;
}

int cmd_gradcheck(double eps, double sample, std::uint64_t seed) {
  GradCheckToy toy = make_gradcheck_toy(seed);
  const auto params = toy.model.params.all();
  auto f = [&]() {
    return mtl_loss(forward(toy.model, toy.batch), toy.targets,
                    toy.model.loss_cfg);
  };
  const GradCheckReport report = grad_check(f, params, eps, sample, seed);
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  std::cout << "checked " << report.coords_checked << " of " << total
            << " coordinates (eps " << eps << ")\nmax relative error: "
            << fmt(report.max_rel_error) << "\n";
  if (report.max_rel_error < 1e-4) {
    std::cout << "PASS (threshold 1e-4)\n";
    return kOk;
  }
  std::cout << "FAIL (threshold 1e-4)\n";
  return kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task spatio-temporal graph forecaster"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a coupled synthetic dataset");
  std::string synth_out;
  int synth_nodes = 8, synth_length = 2000;
  double synth_coupling = 0.8;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--nodes", synth_nodes, "node count (>= 2)")
      ->check(CLI::Range(2, 1 << 20));
  synth->add_option("--length", synth_length, "time steps")->check(CLI::Range(2, 1 << 26));
  synth->add_option("--coupling", synth_coupling, "cross-task coupling in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_seed, "rng seed");

  // train
  auto* train = app.add_subcommand("train", "train a model from a manifest");
  TrainFlags tf;
  train->add_option("--manifest", tf.manifest, "dataset manifest")->required();
  train->add_option("--out", tf.out_dir, "output directory")->required();
  train->add_option("--batch-size", tf.cfg.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", tf.cfg.learning_rate)->check(CLI::NonNegativeNumber);
  train->add_option("--hidden", tf.cfg.hidden_dim)->check(CLI::PositiveNumber);
  train->add_option("--layers", tf.cfg.gcn_layers)->check(CLI::PositiveNumber);
  train->add_option("--max-epochs", tf.cfg.max_epochs)->check(CLI::PositiveNumber);
  train->add_option("--patience", tf.cfg.patience)->check(CLI::PositiveNumber);
  train->add_option("--seed", tf.cfg.seed);
  train->add_option("--history", tf.cfg.history)->check(CLI::PositiveNumber);
  train->add_option("--ctke-dim", tf.cfg.ctke_dim)->check(CLI::PositiveNumber);
  train->add_option("--threshold", tf.cfg.corr_threshold)->check(CLI::Range(0.0, 1.0));
  train->add_option("--gate-l1", tf.cfg.gate_l1)->check(CLI::NonNegativeNumber);
  train->add_option("--prior-layout", tf.prior_layout, "P1|P2|P3|P4");
  train->add_option("--ablation", tf.variant,
                    "full|static_only|dynamic_only|no_gate|no_shared_head|"
                    "shared_input|no_residual|mlp_temporal|mlp_all");
  train->add_option("--corr-mode", tf.corr_mode, "abs|signed");
  train->add_option("--beta", tf.beta, "per-task loss weights (normalized)");
  train->add_option("--alpha", tf.alpha, "per-task loss magnitudes");
  train->add_option("--delta", tf.delta, "per-task smooth-L1 thresholds");
  train->add_option("--dump-priors", tf.dump_priors,
                    "directory for A_S/A_T/A_ST/A_P csv exports");
  train->add_option("--dump-hybrid", tf.dump_hybrid,
                    "directory for per-task hybrid adjacency csv exports");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out,
                         eval_hybrid;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--out", eval_out, "metrics csv path (default stdout)");
  eval_cmd->add_option("--dump-hybrid", eval_hybrid,
                       "directory for per-task hybrid adjacency csv exports");

  // predict
  auto* predict = app.add_subcommand("predict", "emit per-node predictions");
  std::string pred_ckpt, pred_manifest, pred_split = "test", pred_out;
  int pred_limit = 0;
  predict->add_option("--checkpoint", pred_ckpt)->required();
  predict->add_option("--manifest", pred_manifest)->required();
  predict->add_option("--split", pred_split, "train|val|test");
  predict->add_option("--out", pred_out, "predictions csv path (default stdout)");
  predict->add_option("--limit", pred_limit, "max samples (0 = all)")
      ->check(CLI::NonNegativeNumber);

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the full model on a built-in toy");
  double gc_eps = 1e-5, gc_sample = 0.01;
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--eps", gc_eps, "finite-difference step")
      ->check(CLI::PositiveNumber);
  gradcheck
      ->add_option("--sample", gc_sample,
                   "fraction of parameter coordinates to probe, in (0, 1]")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
  gradcheck->add_option("--seed", gc_seed, "rng seed");

  try {
    app.parse(argc, argv);
    if (*synth)
      return cmd_synth(synth_out, synth_nodes, synth_length, synth_coupling,
                       synth_seed);
    if (*train) {
      apply_parsed(tf);
      return cmd_train(tf);
    }
    if (*eval_cmd)
      return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_out, eval_hybrid);
    if (*predict)
      return cmd_predict(pred_ckpt, pred_manifest, pred_split, pred_out, pred_limit);
    if (*gradcheck) return cmd_gradcheck(gc_eps, gc_sample, gc_seed);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  }
}
