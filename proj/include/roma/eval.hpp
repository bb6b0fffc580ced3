#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roma/data.hpp"
#include "roma/encoder.hpp"
#include "roma/tensor.hpp"

namespace roma {

struct CollapseStats {
  double emb_std = 0.0;           // mean per-dimension std of normalized rows
  double mean_offdiag_cos = 0.0;  // mean pairwise cosine over distinct rows
};

// Linear-probe optimization settings. The probe is a multinomial linear
// classifier trained with SGD + momentum and cosine decay on frozen features;
// the learning rate follows the same base_lr * batch/256 scaling rule as the
// main trainer.
struct ProbeConfig {
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 30.0;
  double weight_decay = 0.0;
  double momentum = 0.9;
  uint64_t seed = 123;

  double effective_lr() const { return base_lr * batch_size / 256.0; }
  void validate() const;
};

struct EvalReport {
  double probe_top1 = -1.0;  // negative: not computed
  double knn_top1 = -1.0;
  double emb_std = 0.0;
  double mean_offdiag_cos = 0.0;
  std::string config_echo;

  // Flat key=value lines.
  std::string to_kv() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

namespace eval {

// emb_std and mean pairwise off-diagonal cosine of the (re-normalized) rows.
// The cosine mean uses the Gram identity (|sum z|^2 - sum |z_i|^2) / (n(n-1)),
// so orthonormal rows give exactly 0 and identical unit rows exactly 1.
CollapseStats collapse_diagnostics(const Tensor& embeddings);

// Backbone features of every sample, eval mode, detached from any graph.
// The projector and any random mapping are excluded: evaluation sees the
// representation, not the contrastive head.
Tensor backbone_features_eval(Encoder& enc, const Dataset& ds);

// Train the probe on explicit feature matrices (rows = samples). Every class
// in [0, k) must appear in the training labels. Returns test top-1.
double linear_probe_features(const Tensor& train_x,
                             const std::vector<int>& train_y,
                             const Tensor& test_x,
                             const std::vector<int>& test_y, int k_classes,
                             const ProbeConfig& cfg);

// Probe on frozen backbone features of the datasets.
double linear_probe(Encoder& enc, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg);

// Cosine k-nearest-neighbor vote on backbone features. Vote ties are broken
// by the smaller class id; equal similarities rank by smaller train index.
std::vector<int> knn_predictions(Encoder& enc, const Dataset& train,
                                 const Dataset& test, int k = 20);
double knn_eval(Encoder& enc, const Dataset& train, const Dataset& test,
                int k = 20);

// CSV `id,label,f0..f{d-1}` of backbone features. Deterministic: re-export
// of the same checkpoint is byte-identical.
void export_embeddings(Encoder& enc, const Dataset& ds,
                       const std::string& path);

// Full report: probe + kNN + collapse diagnostics over test features.
EvalReport evaluate(Encoder& enc, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg, int knn_k = 20);

}  // namespace eval

}  // namespace roma
