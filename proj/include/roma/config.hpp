#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "roma/data.hpp"
#include "roma/eval.hpp"
#include "roma/trainer.hpp"

namespace roma {

// Schema or value problem in an experiment config. The message names the
// offending key ("unknown config key \"train.epohcs\"", "config key
// \"loss.tau\": expected number", ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The `data` section: where samples come from and how they are split.
struct DataConfig {
  // "synthetic" generates clustered vectors; "cifar_binary" and "rmds" load
  // the file at `path`.
  std::string source = "synthetic";
  std::string path;

  // Synthetic generation parameters (ignored for file sources).
  int k_classes = 10;
  int per_class = 200;
  int dim = 32;
  double spread = 0.15;

  // Seed for dataset generation and for the stratified train/test split.
  // Kept separate from train.seed so reruns with new training seeds keep the
  // evaluation split fixed.
  uint64_t seed = 42;
  double train_fraction = 0.8;

  AugmentConfig augment;

  void validate() const;
};

// The `eval` section: linear-probe and kNN settings.
struct EvalSettings {
  ProbeConfig probe;
  int knn_k = 20;

  void validate() const;
};

// Union of every module's configuration, one JSON document with sections
// `data`, `encoder`, `loss`, `random`, `train`, `eval`. Every key has a
// default (the member initializers below); unknown keys are rejected.
struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;  // holds encoder/loss/random-map sub-configs
  EvalSettings eval;

  // The augmentation keys live under `data` in the JSON document; this is
  // `train` with data.augment applied, ready for trainer::train.
  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.augment = data.augment;
    return t;
  }

  void validate() const;
};

namespace config {

// All defaults materialized.
ExperimentConfig defaults();

// Parse a JSON document. Missing keys take defaults; unknown keys, type
// mismatches, and malformed JSON throw ConfigError naming the problem.
// The parsed config is validated before it is returned.
ExperimentConfig from_json_text(const std::string& text);
ExperimentConfig load(const std::string& path);

// Serialize with every key present (the resolved form echoed into output
// directories). from_json_text(to_json_text(c)) reproduces c exactly.
std::string to_json_text(const ExperimentConfig& cfg);
void save(const ExperimentConfig& cfg, const std::string& path);

}  // namespace config

}  // namespace roma
