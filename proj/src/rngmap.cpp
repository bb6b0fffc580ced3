#include "roma/rngmap.hpp"

#include <cmath>
#include <stdexcept>

#include "roma/rng.hpp"

namespace roma {

MapDistribution map_distribution_from_string(const std::string& s) {
  if (s == "normal") return MapDistribution::normal;
  if (s == "uniform") return MapDistribution::uniform;
  if (s == "rademacher" || s == "bernoulli") return MapDistribution::rademacher;
  if (s == "bernoulli01") return MapDistribution::bernoulli01;
  throw std::invalid_argument("unknown random distribution: " + s);
}

std::string to_string(MapDistribution d) {
  switch (d) {
    case MapDistribution::normal: return "normal";
    case MapDistribution::uniform: return "uniform";
    case MapDistribution::rademacher: return "rademacher";
    case MapDistribution::bernoulli01: return "bernoulli01";
  }
  return "?";
}

RegenPolicy regen_policy_from_string(const std::string& s) {
  if (s == "none") return RegenPolicy::none;
  if (s == "per_batch") return RegenPolicy::per_batch;
  if (s == "per_epoch") return RegenPolicy::per_epoch;
  if (s == "per_k_epochs") return RegenPolicy::per_k_epochs;
  throw std::invalid_argument("unknown regeneration policy: " + s);
}

std::string to_string(RegenPolicy p) {
  switch (p) {
    case RegenPolicy::none: return "none";
    case RegenPolicy::per_batch: return "per_batch";
    case RegenPolicy::per_epoch: return "per_epoch";
    case RegenPolicy::per_k_epochs: return "per_k_epochs";
  }
  return "?";
}

RandomMap RandomMap::identity_map() {
  RandomMap m;
  m.identity = true;
  return m;
}

RandomMap RandomMap::placeholder(MapDistribution d, int d_out, int d_in,
                                 uint64_t seed, bool scale_entries) {
  RandomMap m;
  m.distribution = d;
  m.d_out = d_out;
  m.d_in = d_in;
  m.seed = seed;
  m.scale_entries = scale_entries;
  return m;
}

namespace rngmap {

RandomMap generate(MapDistribution d, int d_out, int d_in, uint64_t seed,
                   int index, bool scale_entries) {
  if (d_out < 1 || d_in < 1)
    throw std::invalid_argument("random map dimensions must be >= 1");
  if (index < 0) throw std::invalid_argument("generation index must be >= 0");
  RandomMap m = RandomMap::placeholder(d, d_out, d_in, seed, scale_entries);
  m.generation_index = index;
  Rng rng(derive_seed(seed, "map", static_cast<uint64_t>(index)));
  std::vector<double> v(static_cast<size_t>(d_out) * d_in);
  switch (d) {
    case MapDistribution::normal:
      for (double& x : v) x = rng.normal();
      break;
    case MapDistribution::uniform:
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      break;
    case MapDistribution::rademacher:
      for (double& x : v) x = rng.rademacher();
      break;
    case MapDistribution::bernoulli01:
      for (double& x : v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
      break;
  }
  if (scale_entries) {
    double s = 1.0 / std::sqrt(static_cast<double>(d_out));
    for (double& x : v) x *= s;
  }
  m.L = Tensor(d_out, d_in, std::move(v));
  return m;
}

Tensor project(Graph& g, const RandomMap& map, const Tensor& z,
               bool renormalize) {
  // Identity mapping passes through untouched: the loss contracts guarantee
  // unit rows, so renormalization would be a mathematical no-op, and skipping
  // it keeps the identity-map losses bit-equal to their plain counterparts.
  if (map.identity) return z;
  if (map.generation_index < 0)
    throw std::logic_error("project: map has not been generated yet");
  if (z.cols() != map.d_in)
    throw std::invalid_argument("project: input has " + std::to_string(z.cols()) +
                                " columns, map expects " +
                                std::to_string(map.d_in));
  Tensor lt = g.transpose(map.L);  // constant, not recorded
  Tensor out = g.matmul(z, lt);
  return renormalize ? g.l2_normalize_rows(out) : out;
}

RandomMap maybe_regenerate(const RandomMap& map, const RegenSchedule& sched,
                           int epoch, int batch) {
  if (epoch < 0 || batch < 0)
    throw std::invalid_argument("maybe_regenerate: epoch/batch must be >= 0");
  if (sched.policy == RegenPolicy::none) return RandomMap::identity_map();
  bool boundary = false;
  switch (sched.policy) {
    case RegenPolicy::per_batch: boundary = true; break;
    case RegenPolicy::per_epoch: boundary = (batch == 0); break;
    case RegenPolicy::per_k_epochs:
      if (sched.k < 1) throw std::invalid_argument("schedule k must be >= 1");
      boundary = (batch == 0 && epoch % sched.k == 0);
      break;
    case RegenPolicy::none: break;
  }
  if (!boundary) return map;
  if (map.identity)
    throw std::logic_error("maybe_regenerate: identity map has no generator");
  return generate(map.distribution, map.d_out, map.d_in, map.seed,
                  map.generation_index + 1, map.scale_entries);
}

long expected_generations(const RegenSchedule& sched, int epochs,
                          int batches_per_epoch) {
  switch (sched.policy) {
    case RegenPolicy::none: return 0;
    case RegenPolicy::per_batch:
      return static_cast<long>(epochs) * batches_per_epoch;
    case RegenPolicy::per_epoch: return epochs;
    case RegenPolicy::per_k_epochs:
      return (epochs + sched.k - 1) / sched.k;
  }
  return 0;
}

}  // namespace rngmap

}  // namespace roma
