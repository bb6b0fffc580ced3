#pragma once

#include <cstdint>
#include <string>

#include "roma/tensor.hpp"

namespace roma {

// Entry distribution of the projection matrix. `bernoulli01` is the {0,1}
// reading of "Bernoulli"; the default reading is `rademacher` (+/-1).
enum class MapDistribution { normal, uniform, rademacher, bernoulli01 };

MapDistribution map_distribution_from_string(const std::string& s);
std::string to_string(MapDistribution d);

enum class RegenPolicy { none, per_batch, per_epoch, per_k_epochs };

RegenPolicy regen_policy_from_string(const std::string& s);
std::string to_string(RegenPolicy p);

struct RegenSchedule {
  RegenPolicy policy = RegenPolicy::per_epoch;
  int k = 10;  // used by per_k_epochs
};

// Random linear map L (d_out x d_in) inducing the PSD bilinear form
// M = L^T L. L never participates in gradients and is never optimized.
struct RandomMap {
  MapDistribution distribution = MapDistribution::normal;
  int d_out = 0, d_in = 0;
  uint64_t seed = 0;
  bool scale_entries = false;  // multiply entries by 1/sqrt(d_out)
  int generation_index = -1;   // -1: placeholder, no matrix generated yet
  bool identity = false;       // the M = I mapping; L unused
  Tensor L;

  // Identity mapping (policy `none`, and the plain non-ROMA losses).
  static RandomMap identity_map();
  // Carries distribution/shape/seed but no matrix yet; the first
  // maybe_regenerate at a schedule boundary produces generation 0.
  static RandomMap placeholder(MapDistribution d, int d_out, int d_in,
                               uint64_t seed, bool scale_entries = false);

  bool has_matrix() const { return !identity && generation_index >= 0; }
};

namespace rngmap {

// Entries i.i.d. from the named distribution, deterministic in (seed, index):
// normal N(0,1); uniform U(-1,1); rademacher +/-1; bernoulli01 {0,1}.
RandomMap generate(MapDistribution d, int d_out, int d_in, uint64_t seed,
                   int index, bool scale_entries = false);

// Rows of z mapped by L. If renormalize, each projected row is l2-normalized.
// The identity mapping passes z through bit-exactly (even when renormalize is
// set — callers feed unit rows, for which renormalization is a no-op).
// Gradient flows through z only.
Tensor project(Graph& g, const RandomMap& map, const Tensor& z,
               bool renormalize = true);

// Returns a fresh map exactly at schedule boundaries (per_batch: every batch;
// per_epoch: batch 0; per_k_epochs: batch 0 of epochs divisible by k);
// otherwise the input map unchanged. Policy `none` always yields the identity
// mapping.
RandomMap maybe_regenerate(const RandomMap& map, const RegenSchedule& sched,
                           int epoch, int batch);

// Closed-form number of generations over a run of `epochs` epochs with
// `batches_per_epoch` batches.
long expected_generations(const RegenSchedule& sched, int epochs,
                          int batches_per_epoch);

}  // namespace rngmap

}  // namespace roma
