#include "roma/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

namespace roma {

namespace experiment {

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::pair<Dataset, Dataset> split_for(const ExperimentConfig& cfg,
                                      const Dataset& ds) {
  return data::split_stratified(ds, cfg.data.train_fraction, cfg.data.seed);
}

}  // namespace

Dataset build_dataset(const DataConfig& cfg) {
  cfg.validate();
  if (cfg.source == "synthetic")
    return data::gen_synthetic(cfg.k_classes, cfg.per_class, cfg.dim,
                               cfg.spread, cfg.seed);
  if (cfg.source == "cifar_binary") return data::load_cifar_binary(cfg.path);
  return data::load_rmds(cfg.path);
}

ExperimentResult run(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  Dataset all = build_dataset(cfg.data);
  auto [train_ds, test_ds] = split_for(cfg, all);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    config::save(cfg, out_dir + "/config.json");
  }

  ExperimentResult result;
  result.train = trainer::train(cfg.resolved_train(), train_ds, out_dir);
  result.report = eval::evaluate(result.train.encoder, train_ds, test_ds,
                                 cfg.eval.probe, cfg.eval.knn_k);
  if (!out_dir.empty())
    write_text_file(out_dir + "/eval_report.txt", result.report.to_kv());
  return result;
}

double random_init_probe(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset all = build_dataset(cfg.data);
  auto [train_ds, test_ds] = split_for(cfg, all);
  Encoder enc =
      Encoder::init(cfg.train.encoder, all.dim(), cfg.train.seed);
  return eval::linear_probe(enc, train_ds, test_ds, cfg.eval.probe);
}

namespace {

struct Variant {
  std::string label;  // table row name
  std::string slug;   // run subdirectory
  ExperimentConfig cfg;
};

std::vector<Variant> loss_variants(const ExperimentConfig& base) {
  // The hinge+CE family: drop one term at a time. lambda stays as configured
  // so each variant trains the surviving terms at their combined-loss
  // strength.
  std::vector<Variant> out;
  ExperimentConfig triplet = base;
  triplet.train.loss = LossKind::triplet_ce;
  triplet.train.loss_params.lambda = 0.0;
  out.push_back({"Triplet", "loss_triplet", triplet});

  ExperimentConfig ce = base;
  ce.train.loss = LossKind::triplet_ce;
  ce.train.loss_params.hinge_weight = 0.0;
  out.push_back({"CE", "loss_ce", ce});

  ExperimentConfig both = base;
  both.train.loss = LossKind::triplet_ce;
  out.push_back({"Triplet+CE", "loss_triplet_ce", both});
  return out;
}

std::vector<Variant> frequency_variants(const ExperimentConfig& base) {
  auto with_policy = [&base](RegenPolicy p, int k) {
    ExperimentConfig c = base;
    c.train.map.schedule.policy = p;
    c.train.map.schedule.k = k;
    return c;
  };
  return {
      {"NoRandom", "freq_norandom", with_policy(RegenPolicy::none, 10)},
      {"1Batch", "freq_1batch", with_policy(RegenPolicy::per_batch, 10)},
      {"1Epoch", "freq_1epoch", with_policy(RegenPolicy::per_epoch, 10)},
      {"10Epoch", "freq_10epoch", with_policy(RegenPolicy::per_k_epochs, 10)},
  };
}

std::vector<Variant> strategy_variants(const ExperimentConfig& base) {
  auto with_dist = [&base](MapDistribution d) {
    ExperimentConfig c = base;
    c.train.map.distribution = d;
    // A strategy comparison needs the mapping active.
    if (c.train.map.schedule.policy == RegenPolicy::none)
      c.train.map.schedule.policy = RegenPolicy::per_epoch;
    return c;
  };
  return {
      {"Bernoulli", "strat_bernoulli", with_dist(MapDistribution::rademacher)},
      {"Uniform", "strat_uniform", with_dist(MapDistribution::uniform)},
      {"Normal", "strat_normal", with_dist(MapDistribution::normal)},
  };
}

std::vector<Variant> batch_variants(const ExperimentConfig& base,
                                    int train_side_size) {
  std::vector<Variant> out;
  for (int b : {64, 128, 256, 512, 1024}) {
    if (b > train_side_size) continue;  // a batch cannot exceed the dataset
    ExperimentConfig c = base;
    c.train.batch_size = b;  // effective lr rescales via base_lr * b / 256
    char slug[32];
    std::snprintf(slug, sizeof slug, "batch_%04d", b);
    out.push_back({std::to_string(b), slug, c});
  }
  return out;
}

std::vector<Variant> dim_variants(const ExperimentConfig& base) {
  const int d = base.train.encoder.projector_dim;
  const std::pair<const char*, double> grid[] = {
      {"d/8", 1.0 / 8}, {"d/4", 1.0 / 4}, {"d/2", 1.0 / 2},
      {"d", 1.0},       {"2d", 2.0},      {"4d", 4.0},
  };
  std::vector<Variant> out;
  for (const auto& [label, mult] : grid) {
    int dim = std::max(1, static_cast<int>(d * mult));
    ExperimentConfig c = base;
    c.train.map.dim = dim;
    if (c.train.map.schedule.policy == RegenPolicy::none)
      c.train.map.schedule.policy = RegenPolicy::per_epoch;
    char slug[32];
    std::snprintf(slug, sizeof slug, "dim_%04d", dim);
    out.push_back({label, slug, c});
  }
  return out;
}

}  // namespace

std::string ablation_csv_header() {
  return "variant,probe_top1,knn_top1,final_loss,emb_std,mean_offdiag_cos";
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = ablation_csv_header() + "\n";
  for (const AblationRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6g,%.6g,%.6g",
                  r.variant.c_str(), r.probe_top1, r.knn_top1, r.final_loss,
                  r.emb_std, r.mean_offdiag_cos);
    out += buf;
    out += "\n";
  }
  return out;
}

std::vector<AblationRow> ablate(const ExperimentConfig& base,
                                const std::string& axis,
                                const std::string& out_dir) {
  base.validate();

  std::vector<Variant> variants;
  if (axis == "loss") {
    variants = loss_variants(base);
  } else if (axis == "frequency") {
    variants = frequency_variants(base);
  } else if (axis == "strategy") {
    variants = strategy_variants(base);
  } else if (axis == "batch") {
    Dataset all = build_dataset(base.data);
    auto [train_ds, test_ds] = split_for(base, all);
    variants = batch_variants(base, train_ds.size());
  } else if (axis == "dim") {
    variants = dim_variants(base);
  } else {
    throw ConfigError("unknown ablation axis \"" + axis +
                      "\" (expected loss, frequency, strategy, batch, dim)");
  }

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    std::string run_dir = out_dir.empty() ? "" : out_dir + "/" + v.slug;
    ExperimentResult res = run(v.cfg, run_dir);
    AblationRow row;
    row.variant = v.label;
    row.probe_top1 = res.report.probe_top1;
    row.knn_top1 = res.report.knn_top1;
    row.final_loss =
        res.train.metrics.empty() ? 0.0 : res.train.metrics.back().loss;
    row.emb_std = res.report.emb_std;
    row.mean_offdiag_cos = res.report.mean_offdiag_cos;
    rows.push_back(row);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/ablate_" + axis + ".csv", ablation_csv(rows));
  }
  return rows;
}

}  // namespace experiment

}  // namespace roma
