#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "roma/rng.hpp"
#include "roma/rngmap.hpp"
#include "roma/tensor.hpp"

using namespace roma;

namespace {

Tensor random_row(Rng& rng, int d) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return Tensor(1, d, std::move(v));
}

// u^T (L^T L) v computed through the explicit Gram matrix.
double bilinear_via_gram(Graph& g, const Tensor& L, const Tensor& u,
                         const Tensor& v) {
  Tensor m = g.matmul(g.transpose(L), L);
  return g.matmul(g.matmul(u, m), g.transpose(v)).scalar_value();
}

double dot_of_projections(Graph& g, const Tensor& L, const Tensor& u,
                          const Tensor& v) {
  Tensor lu = g.matmul(u, g.transpose(L));
  Tensor lv = g.matmul(v, g.transpose(L));
  return g.sum(g.mul(lu, lv)).scalar_value();
}

}  // namespace

TEST_CASE("generate: rademacher support, determinism, distinct generations") {
  RandomMap m = rngmap::generate(MapDistribution::rademacher, 16, 24, 7, 0);
  CHECK(m.L.rows() == 16);
  CHECK(m.L.cols() == 24);
  for (double x : m.L.values()) CHECK((x == 1.0 || x == -1.0));

  RandomMap m2 = rngmap::generate(MapDistribution::rademacher, 16, 24, 7, 0);
  CHECK(std::memcmp(m.L.values().data(), m2.L.values().data(),
                    m.L.size() * sizeof(double)) == 0);

  RandomMap m3 = rngmap::generate(MapDistribution::rademacher, 16, 24, 7, 1);
  CHECK(std::memcmp(m.L.values().data(), m3.L.values().data(),
                    m.L.size() * sizeof(double)) != 0);
}

TEST_CASE("generate: sample statistics per distribution") {
  // production-scale shape, ~2e6 entries
  RandomMap n = rngmap::generate(MapDistribution::normal, 1024, 2048, 42, 0);
  double s = 0.0, s2 = 0.0;
  for (double x : n.L.values()) {
    s += x;
    s2 += x * x;
  }
  double cnt = n.L.size();
  double mean = s / cnt, var = s2 / cnt - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var > 0.98);
  CHECK(var < 1.02);

  RandomMap u = rngmap::generate(MapDistribution::uniform, 512, 512, 42, 0);
  double lo = 1e9, hi = -1e9, us = 0.0, us2 = 0.0;
  for (double x : u.L.values()) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    us += x;
    us2 += x * x;
  }
  CHECK(lo >= -1.0);
  CHECK(hi < 1.0);
  double ucnt = u.L.size();
  double umean = us / ucnt;
  CHECK(std::abs(umean) < 0.01);
  CHECK(std::abs(us2 / ucnt - umean * umean - 1.0 / 3.0) < 0.01);

  RandomMap b = rngmap::generate(MapDistribution::bernoulli01, 256, 256, 42, 0);
  double ones = 0.0;
  for (double x : b.L.values()) {
    REQUIRE((x == 0.0 || x == 1.0));
    ones += x;
  }
  CHECK(std::abs(ones / b.L.size() - 0.5) < 0.01);
}

TEST_CASE("generate: entry scaling divides by sqrt(d_out)") {
  RandomMap plain = rngmap::generate(MapDistribution::rademacher, 64, 32, 5, 0);
  RandomMap scaled =
      rngmap::generate(MapDistribution::rademacher, 64, 32, 5, 0, true);
  double f = 1.0 / std::sqrt(64.0);
  for (int i = 0; i < plain.L.size(); ++i)
    CHECK(scaled.L.values()[i] == plain.L.values()[i] * f);
}

TEST_CASE("generate rejects bad arguments") {
  CHECK_THROWS_AS(rngmap::generate(MapDistribution::normal, 0, 4, 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(rngmap::generate(MapDistribution::normal, 4, 4, 1, -1),
                  std::invalid_argument);
  CHECK_THROWS_AS(map_distribution_from_string("gaussian"),
                  std::invalid_argument);
  CHECK(map_distribution_from_string("bernoulli") == MapDistribution::rademacher);
}

TEST_CASE("project: identity map passes through bit-exactly") {
  Rng rng(3);
  Graph g;
  Tensor z = random_row(rng, 8);
  RandomMap id = RandomMap::identity_map();
  Tensor out = rngmap::project(g, id, z, /*renormalize=*/false);
  CHECK(out.same_storage(z));
  CHECK(rngmap::project(g, id, z, true).same_storage(z));

  // explicit L = I matrix, renormalize=false: values bit-equal
  RandomMap expl = RandomMap::placeholder(MapDistribution::normal, 8, 8, 0);
  expl.generation_index = 0;
  expl.L = Tensor::identity(8);
  Tensor out2 = rngmap::project(g, expl, z, false);
  for (int i = 0; i < z.size(); ++i) CHECK(out2.values()[i] == z.values()[i]);
}

TEST_CASE("project: hand example L=[[1,1]]") {
  Graph g;
  Tensor u = Tensor::row({1.0, 0.0});
  Tensor v = Tensor::row({0.0, 1.0});
  Tensor L(1, 2, {1.0, 1.0});
  CHECK(dot_of_projections(g, L, u, v) == 1.0);
  CHECK(bilinear_via_gram(g, L, u, v) == 1.0);

  RandomMap m = RandomMap::placeholder(MapDistribution::normal, 1, 2, 0);
  m.generation_index = 0;
  m.L = L;
  Tensor pu = rngmap::project(g, m, u, false);
  Tensor pv = rngmap::project(g, m, v, false);
  CHECK(g.sum(g.mul(pu, pv)).scalar_value() == 1.0);
}

TEST_CASE("project: scale cancellation under renormalize") {
  Rng rng(5);
  Graph g;
  Tensor z = g.l2_normalize_rows(random_row(rng, 8));
  RandomMap two = RandomMap::placeholder(MapDistribution::normal, 8, 8, 0);
  two.generation_index = 0;
  two.L = Tensor(8, 8);
  for (int i = 0; i < 8; ++i) two.L.at(i, i) = 2.0;
  RandomMap one = two;
  one.L = Tensor::identity(8);

  Tensor a = rngmap::project(g, two, z, true);
  Tensor b = rngmap::project(g, one, z, true);
  for (int i = 0; i < 8; ++i) {
    CHECK(a.values()[i] == b.values()[i]);  // power-of-two scale is exact
    CHECK(a.values()[i] == doctest::Approx(z.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("project: gradient flows through z, never through L") {
  Rng rng(9);
  Graph g;
  Tensor z = random_row(rng, 12);
  z.set_requires_grad(true);
  RandomMap m = rngmap::generate(MapDistribution::normal, 6, 12, 11, 0);
  CHECK_FALSE(m.L.requires_grad());
  Tensor out = rngmap::project(g, m, z, true);
  Tensor loss = g.sum(out);
  g.backward(loss);
  double gz = 0.0;
  for (double x : z.grad()) gz += std::abs(x);
  CHECK(gz > 0.0);
  for (double x : m.L.grad()) CHECK(x == 0.0);
}

TEST_CASE("project rejects dimension mismatch and placeholders") {
  Graph g;
  Tensor z(1, 5, {1, 2, 3, 4, 5});
  RandomMap m = rngmap::generate(MapDistribution::normal, 3, 4, 1, 0);
  CHECK_THROWS_AS(rngmap::project(g, m, z, false), std::invalid_argument);
  RandomMap ph = RandomMap::placeholder(MapDistribution::normal, 3, 5, 1);
  CHECK_THROWS_AS(rngmap::project(g, ph, z, false), std::logic_error);
}

TEST_CASE("bilinear-projection equivalence across shapes and distributions") {
  Rng rng(77);
  Graph g;
  const MapDistribution dists[] = {MapDistribution::normal,
                                   MapDistribution::uniform,
                                   MapDistribution::rademacher};
  uint64_t seed = 1000;
  for (MapDistribution d : dists) {
    for (int trial = 0; trial < 30; ++trial) {
      int d_in = 2 + static_cast<int>(rng.below(127));   // up to 128
      int d_out = 1 + static_cast<int>(rng.below(64));   // up to 64
      RandomMap m = rngmap::generate(d, d_out, d_in, ++seed, 0);
      Tensor u = random_row(rng, d_in);
      Tensor v = random_row(rng, d_in);
      double lhs = bilinear_via_gram(g, m.L, u, v);
      double rhs = dot_of_projections(g, m.L, u, v);
      CHECK(std::abs(lhs - rhs) / (std::abs(lhs) + 1e-12) < 1e-10);
    }
  }
}

TEST_CASE("PSD property of induced M") {
  Rng rng(88);
  Graph g;
  RandomMap m = rngmap::generate(MapDistribution::normal, 24, 48, 12, 0);
  Tensor gram = g.matmul(g.transpose(m.L), m.L);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor v = random_row(rng, 48);
    double q = g.matmul(g.matmul(v, gram), g.transpose(v)).scalar_value();
    CHECK(q >= -1e-12);
  }
}

TEST_CASE("exact perturbation identity") {
  Rng rng(99);
  Graph g;
  for (int trial = 0; trial < 50; ++trial) {
    int d = 16;
    Tensor u = random_row(rng, d);
    Tensor v = random_row(rng, d);
    std::vector<double> m1(d * d), m2(d * d);
    for (double& x : m1) x = rng.normal();
    for (double& x : m2) x = rng.normal();
    Tensor M1(d, d, m1), M2(d, d, m2);
    Tensor A = g.add(g.add(Tensor::identity(d), M1), M2);
    double lhs = g.matmul(g.matmul(u, A), g.transpose(v)).scalar_value();
    double t0 = g.matmul(u, g.transpose(v)).scalar_value();
    double t1 = g.matmul(g.matmul(u, M1), g.transpose(v)).scalar_value();
    double t2 = g.matmul(g.matmul(u, M2), g.transpose(v)).scalar_value();
    double rhs = t0 + t1 + t2;
    double scale = std::abs(t0) + std::abs(t1) + std::abs(t2) + 1.0;
    CHECK(std::abs(lhs - rhs) / scale < 1e-12);
  }
}

TEST_CASE("maybe_regenerate boundaries") {
  RegenSchedule per_epoch{RegenPolicy::per_epoch, 10};
  RandomMap m = rngmap::generate(MapDistribution::normal, 4, 8, 3, 0);

  RandomMap at_boundary = rngmap::maybe_regenerate(m, per_epoch, 3, 0);
  CHECK(at_boundary.generation_index == 1);
  RandomMap mid_epoch = rngmap::maybe_regenerate(m, per_epoch, 3, 5);
  CHECK(mid_epoch.generation_index == 0);
  CHECK(mid_epoch.L.same_storage(m.L));

  RegenSchedule none{RegenPolicy::none, 10};
  RandomMap id = rngmap::maybe_regenerate(m, none, 0, 0);
  CHECK(id.identity);
  CHECK(rngmap::maybe_regenerate(m, none, 7, 3).identity);
}

TEST_CASE("schedule totality matches closed form") {
  struct Case {
    RegenSchedule sched;
    int epochs, batches;
  };
  const Case cases[] = {
      {{RegenPolicy::none, 10}, 25, 7},
      {{RegenPolicy::per_batch, 10}, 5, 9},
      {{RegenPolicy::per_epoch, 10}, 25, 7},
      {{RegenPolicy::per_k_epochs, 10}, 25, 7},  // epochs 0,10,20 -> 3
      {{RegenPolicy::per_k_epochs, 3}, 7, 4},    // epochs 0,3,6 -> 3
      {{RegenPolicy::per_k_epochs, 1}, 6, 2},
  };
  for (const auto& c : cases) {
    RandomMap map = RandomMap::placeholder(MapDistribution::normal, 4, 8, 3);
    long regens = 0;
    for (int e = 0; e < c.epochs; ++e)
      for (int b = 0; b < c.batches; ++b) {
        RandomMap next = rngmap::maybe_regenerate(map, c.sched, e, b);
        if (next.identity != map.identity ||
            next.generation_index != map.generation_index)
          ++regens;
        map = next;
      }
    if (c.sched.policy == RegenPolicy::none) {
      CHECK(regens == 1);  // single placeholder -> identity switch
      CHECK(rngmap::expected_generations(c.sched, c.epochs, c.batches) == 0);
    } else {
      CHECK(regens == rngmap::expected_generations(c.sched, c.epochs, c.batches));
    }
    if (c.sched.policy == RegenPolicy::per_k_epochs && c.sched.k == 10)
      CHECK(regens == 3);
  }
}
