// roma: self-supervised representation learning with random PSD mappings.
//
// Subcommands:
//   train     optimize an encoder and write checkpoint/metrics/config
//   eval      probe, kNN, or embedding export from a checkpoint
//   ablate    sweep one config axis and write a comparison table
//   selftest  verify gradients, PSD equivalence, reductions, closed forms
//
// Exit codes: 0 success; 1 self-test failure; 2 invalid config, data, or
// checkpoint; 3 training aborted on a non-finite loss.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "roma/config.hpp"
#include "roma/eval.hpp"
#include "roma/experiment.hpp"
#include "roma/selftest.hpp"
#include "roma/trainer.hpp"

namespace {

using namespace roma;

// Training-seed resolution: --seed flag beats ROMA_SEED beats the config.
uint64_t resolve_seed(uint64_t from_config, bool flag_set, uint64_t flag_value) {
  if (flag_set) return flag_value;
  const char* env = std::getenv("ROMA_SEED");
  if (env && *env) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError("ROMA_SEED must be a non-negative integer, got \"" +
                        std::string(env) + "\"");
    return v;
  }
  return from_config;
}

ExperimentConfig load_config_or_defaults(const std::string& path) {
  if (path.empty()) return config::defaults();
  return config::load(path);
}

int run_train(const std::string& config_path, const std::string& out_dir,
              bool seed_set, uint64_t seed) {
  ExperimentConfig cfg = load_config_or_defaults(config_path);
  cfg.train.seed = resolve_seed(cfg.train.seed, seed_set, seed);
  ExperimentResult res = experiment::run(cfg, out_dir);
  if (!res.train.metrics.empty()) {
    const MetricsRecord& last = res.train.metrics.back();
    std::cout << "trained " << last.epoch << " epochs, " << res.train.total_steps
              << " steps, final loss " << last.loss << "\n";
  } else {
    std::cout << "epochs=0: initial parameters checkpointed\n";
  }
  std::cout << res.report.to_kv();
  std::cout << "artifacts written to " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_path, const std::string& mode,
             const std::string& out_dir) {
  if (mode != "linear" && mode != "knn" && mode != "export")
    throw ConfigError("unknown eval mode \"" + mode +
                      "\" (expected linear, knn, export)");

  ExperimentConfig cfg = load_config_or_defaults(config_path);
  if (!data_path.empty()) {
    cfg.data.path = data_path;
    cfg.data.source = data_path.size() >= 5 &&
                              data_path.substr(data_path.size() - 5) == ".rmds"
                          ? "rmds"
                          : "cifar_binary";
  }

  Encoder enc = checkpoint::load_encoder(checkpoint);
  Dataset all = experiment::build_dataset(cfg.data);
  if (enc.input_dim() != all.dim())
    throw ConfigError("checkpoint expects input dimension " +
                      std::to_string(enc.input_dim()) + " but the dataset has " +
                      std::to_string(all.dim()));

  std::filesystem::create_directories(out_dir);

  if (mode == "export") {
    std::string path = out_dir + "/embeddings.csv";
    eval::export_embeddings(enc, all, path);
    std::cout << "exported " << all.size() << " embeddings to " << path << "\n";
    return 0;
  }

  auto [train_ds, test_ds] =
      data::split_stratified(all, cfg.data.train_fraction, cfg.data.seed);

  EvalReport rep;
  if (mode == "linear") {
    rep = eval::evaluate(enc, train_ds, test_ds, cfg.eval.probe,
                         cfg.eval.knn_k);
  } else {  // knn only: skip the probe
    rep.knn_top1 = eval::knn_eval(enc, train_ds, test_ds, cfg.eval.knn_k);
    CollapseStats cs =
        eval::collapse_diagnostics(eval::backbone_features_eval(enc, test_ds));
    rep.emb_std = cs.emb_std;
    rep.mean_offdiag_cos = cs.mean_offdiag_cos;
  }
  std::cout << rep.to_kv();

  std::ofstream f(out_dir + "/eval_report.txt", std::ios::binary);
  if (f) f << rep.to_kv();
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& axis,
               const std::string& out_dir, bool seed_set, uint64_t seed) {
  ExperimentConfig cfg = load_config_or_defaults(config_path);
  cfg.train.seed = resolve_seed(cfg.train.seed, seed_set, seed);
  std::vector<AblationRow> rows = experiment::ablate(cfg, axis, out_dir);
  std::cout << experiment::ablation_csv(rows);
  std::cout << "table written to " << out_dir << "/ablate_" << axis << ".csv\n";
  return 0;
}

int run_selftest(uint64_t seed) {
  return selftest::run_all(std::cout, seed) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Self-supervised representation learning with random PSD mappings"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint, data_path;
  std::string mode = "linear", axis;
  uint64_t seed = 0;
  uint64_t selftest_seed = 2026;

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train an encoder and write artifacts");
  train_cmd->add_option("--config", config_path, "JSON experiment config");
  train_cmd->add_option("--out", out_dir, "output directory (default: out)");
  CLI::Option* train_seed =
      train_cmd->add_option("--seed", seed, "training seed override");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpointed encoder");
  eval_cmd->add_option("--checkpoint", checkpoint, "encoder checkpoint")
      ->required();
  eval_cmd->add_option("--config", config_path,
                       "JSON config (data/eval sections)");
  eval_cmd->add_option("--data", data_path,
                       "dataset file (.rmds or CIFAR binary); overrides the "
                       "config's data source");
  eval_cmd->add_option("--mode", mode, "linear | knn | export");
  eval_cmd->add_option("--out", out_dir, "output directory (default: out)");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "Sweep one axis and tabulate results");
  ablate_cmd->add_option("--config", config_path, "JSON experiment config");
  ablate_cmd
      ->add_option("--axis", axis, "loss | frequency | strategy | batch | dim")
      ->required();
  ablate_cmd->add_option("--out", out_dir, "output directory (default: out)");
  CLI::Option* ablate_seed =
      ablate_cmd->add_option("--seed", seed, "training seed override");

  CLI::App* selftest_cmd = app.add_subcommand(
      "selftest", "Check gradients, PSD equivalence, reductions, closed forms");
  selftest_cmd->add_option("--seed", selftest_seed,
                           "seed for the property instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd)
      return run_train(config_path, out_dir, train_seed->count() > 0, seed);
    if (*eval_cmd)
      return run_eval(config_path, checkpoint, data_path, mode, out_dir);
    if (*ablate_cmd)
      return run_ablate(config_path, axis, out_dir, ablate_seed->count() > 0,
                        seed);
    return run_selftest(selftest_seed);
  } catch (const NanAbortError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
