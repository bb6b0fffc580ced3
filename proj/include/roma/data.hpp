#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "roma/rng.hpp"
#include "roma/tensor.hpp"

namespace roma {

// Labels are carried for evaluation only; no training code path reads them.
struct Dataset {
  Tensor samples;  // N x D
  std::vector<int> labels;
  int num_classes = 0;
  std::string source;  // "synthetic" | "cifar_binary"

  int size() const { return samples.rows(); }
  int dim() const { return samples.cols(); }
};

struct AugmentConfig {
  // vector pipeline
  double noise_sigma = 0.1;
  double scale_lo = 0.9, scale_hi = 1.1;
  double mask_prob = 0.0;
  // image pipeline (32x32x3 planes, values in [0,1])
  bool image_mode = false;
  double crop_scale_lo = 0.6, crop_scale_hi = 1.0;
  double flip_prob = 0.5;
  double brightness = 0.0;  // additive jitter strength
  double contrast = 0.0;    // multiplicative jitter strength
  double grayscale_prob = 0.0;
  double blur_prob = 0.0;
  double solarize_prob = 0.0;

  void validate() const;
};

// Raw augmented views produced by make_triplets; anchors/positives are two
// views of the same source, negatives a view of a deranged source.
struct TripletViews {
  Tensor anchors, positives, negatives;  // B x D each
  std::vector<int> negative_source;      // row i's negative came from this row
};

struct PairViews {
  Tensor a, b;  // B x D each
};

namespace data {

// k well-separated spherical Gaussian clusters: class means uniform on the
// unit sphere with pairwise angle >= 45 degrees (rejection-sampled), samples =
// mean + spread * N(0, I). Deterministic in seed.
Dataset gen_synthetic(int k_classes, int per_class, int dim, double spread,
                      uint64_t seed);

// Seeded stratified split: per class, a shuffled train_fraction of the
// samples goes to the first dataset, the rest to the second. Every class is
// guaranteed at least one sample on each side (train_fraction permitting).
std::pair<Dataset, Dataset> split_stratified(const Dataset& ds,
                                             double train_fraction,
                                             uint64_t seed);

// CIFAR binary records: 3073 bytes each — label byte, then 1024 R, 1024 G,
// 1024 B bytes, row-major; pixels scaled to [0,1].
Dataset load_cifar_binary(const std::string& path);
void save_cifar_binary(const Dataset& ds, const std::string& path);

// Synthetic dataset container: magic "RMDS", version u32 LE, N/D/k u32 LE,
// N*D float32 LE samples, N label bytes.
Dataset load_rmds(const std::string& path);
void save_rmds(const Dataset& ds, const std::string& path);

// Two independent stochastic views of one sample, drawn from `rng`.
std::pair<std::vector<double>, std::vector<double>> augment_pair(
    const std::vector<double>& sample, const AugmentConfig& cfg, Rng& rng);

// One augmented view (the pipeline underlying augment_pair).
std::vector<double> augment_view(const std::vector<double>& sample,
                                 const AugmentConfig& cfg, Rng& rng);

// For each source row i: (aug(X_i), aug(X_i), aug(X_perm(i))) where perm is a
// seeded cyclic derangement (perm(i) != i always). Per-row randomness comes
// from substreams of stream_seed, so results are reproducible from the seed
// alone and independent of evaluation order.
TripletViews make_triplets(const Tensor& sources, const AugmentConfig& cfg,
                           uint64_t stream_seed);

// Two views per source row (SimCLR/SimSiam input).
PairViews make_view_pairs(const Tensor& sources, const AugmentConfig& cfg,
                          uint64_t stream_seed);

}  // namespace data

}  // namespace roma
