#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "roma/tensor.hpp"

namespace roma {

struct EncoderConfig {
  // Hidden widths of the MLP backbone, applied after the input dimension.
  std::vector<int> backbone_widths = {512, 512};
  // Width shared by the three projector FC layers.
  int projector_dim = 512;
  // Attach the 2-layer bottleneck predictor head (SimSiam variant).
  bool predictor = false;
  double leaky_slope = 0.2;

  void validate() const;
};

// One fully connected layer with its batch-norm block. Whether an activation
// follows is decided by the network structure, not stored here.
struct FcBn {
  Tensor W;  // in x out
  Tensor b;  // 1 x out
  Tensor gamma, beta;
  BnStats stats;
  bool has_bn = true;
};

// Backbone MLP + 3-layer projection head (+ optional predictor).
// Structure per layer: FC -> BN -> LeakyReLU(slope), except the projector's
// last layer (FC -> BN, no activation) and the predictor's last layer (plain
// FC). encode() output is l2-normalized.
class Encoder {
 public:
  // Fan-in-scaled uniform init: W ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)),
  // biases zero, BN gamma 1 / beta 0. Deterministic in seed.
  static Encoder init(const EncoderConfig& cfg, int input_dim, uint64_t seed);

  // Backbone output (the representation used for evaluation). n x feature_dim.
  Tensor backbone_features(Graph& g, const Tensor& x, bool training);
  // Projector output before normalization. n x projector_dim.
  Tensor encode_raw(Graph& g, const Tensor& x, bool training);
  // l2-normalized embedding z.
  Tensor encode(Graph& g, const Tensor& x, bool training);
  // l2-normalized predictor output p from a raw (unnormalized) projector
  // output. Requires cfg.predictor.
  Tensor predict(Graph& g, const Tensor& z_raw, bool training);

  int input_dim() const { return input_dim_; }
  int feature_dim() const;    // backbone output width
  int embedding_dim() const;  // projector output width
  bool has_predictor() const { return !predictor_.empty(); }

  // Human-readable structural description (one layer per line).
  std::string describe() const;

  // All gradient-participating tensors.
  std::vector<Tensor*> parameters();
  // The subset subject to weight decay: FC weights only (no biases, no BN).
  std::vector<Tensor*> decayable_parameters();
  // Stable names for checkpointing; includes BN running stats as
  // "<layer>.bn.running_mean/var" entries materialized on demand.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, BnStats*>> named_stats();

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  int input_dim_ = 0;
  std::vector<FcBn> backbone_;
  std::vector<FcBn> projector_;
  std::vector<FcBn> predictor_;

  Tensor run_chain(Graph& g, std::vector<FcBn>& chain, const Tensor& x,
                   bool training, int activations);
};

}  // namespace roma
