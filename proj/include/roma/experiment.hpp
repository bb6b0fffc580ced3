#pragma once

#include <string>
#include <vector>

#include "roma/config.hpp"
#include "roma/eval.hpp"
#include "roma/trainer.hpp"

namespace roma {

struct ExperimentResult {
  TrainResult train;
  EvalReport report;
};

// One row of an ablation comparison table.
struct AblationRow {
  std::string variant;
  double probe_top1 = 0.0;
  double knn_top1 = 0.0;
  double final_loss = 0.0;
  double emb_std = 0.0;
  double mean_offdiag_cos = 0.0;
};

namespace experiment {

// Materialize cfg.data: synthetic generation or file loading per `source`.
Dataset build_dataset(const DataConfig& cfg);

// The full protocol: stratified split on data.seed; self-supervised training
// on the train side (labels never touched); linear probe trained on frozen
// backbone features of the train side; probe/kNN accuracy and collapse
// diagnostics measured on the held-out side. When out_dir is non-empty,
// writes metrics.csv, checkpoint.bin, config.json, and eval_report.txt.
ExperimentResult run(const ExperimentConfig& cfg, const std::string& out_dir);

// Probe accuracy of a freshly initialized, untrained encoder under the same
// protocol — the frozen-random-init baseline trained runs are compared
// against.
double random_init_probe(const ExperimentConfig& cfg);

// Sweeps one ablation axis, one seeded run per variant, each into
// out_dir/<slug>/, and writes out_dir/ablate_<axis>.csv. Grids:
//   loss:      Triplet, CE, Triplet+CE
//   frequency: NoRandom, 1Batch, 1Epoch, 10Epoch
//   strategy:  Bernoulli, Uniform, Normal
//   batch:     64, 128, 256, 512, 1024 (variants larger than the train-side
//              sample count are skipped)
//   dim:       d/8, d/4, d/2, d, 2d, 4d of the embedding dimension
// Unknown axis -> ConfigError.
std::vector<AblationRow> ablate(const ExperimentConfig& base,
                                const std::string& axis,
                                const std::string& out_dir);

std::string ablation_csv_header();
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace experiment

}  // namespace roma
