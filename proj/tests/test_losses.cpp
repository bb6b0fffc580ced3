#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "roma/losses.hpp"
#include "roma/rng.hpp"
#include "roma/rngmap.hpp"
#include "roma/tensor.hpp"

using namespace roma;

namespace {

// Frozen closed-form values (independent high-precision evaluation).
constexpr double kLog2 = 0.6931471805599453;
constexpr double kLog3 = 1.0986122886681098;
constexpr double kLog1pExpM2 = 0.1269280110429726;   // log(1 + e^-2)
constexpr double kLog1pExpP2 = 2.1269280110429727;   // log(1 + e^2)
constexpr double kLog1p2ExpM2 = 0.23954476622188453; // log(1 + 2 e^-2)

Tensor unit2(double s) {
  // 2-d unit vector with first coordinate s.
  return Tensor::row({s, std::sqrt(std::max(0.0, 1.0 - s * s))});
}

Tensor random_rows(Rng& rng, int n, int d) {
  std::vector<double> v(static_cast<size_t>(n) * d);
  for (double& x : v) x = rng.normal();
  return Tensor(n, d, std::move(v));
}

double stable_softplus_ref(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Scalar-loop reference of triplet_ce_loss with the identity map, replicating
// the library's operation order exactly so values match bit-for-bit.
double triplet_ce_ref(const Tensor& a, const Tensor& p, const Tensor& n,
                      const LossParams& lp) {
  int B = a.rows(), d = a.cols();
  double inv_tau = 1.0 / lp.tau;
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    double sp = 0.0, sn = 0.0;
    for (int j = 0; j < d; ++j) sp += a.at(i, j) * p.at(i, j);
    for (int j = 0; j < d; ++j) sn += a.at(i, j) * n.at(i, j);
    double hinge_arg = lp.faithful_eq1 ? (sp - sn) + lp.gamma : (sn - sp) + lp.gamma;
    double hinge = hinge_arg > 0.0 ? hinge_arg : 0.0;
    double ce = stable_softplus_ref((sn - sp) * inv_tau);
    total += hinge + ce * lp.lambda;
  }
  return total / B;
}

// Scalar-loop reference of nt_xent_roma with the identity map.
double nt_xent_ref(const Tensor& v, const std::vector<int>& pair,
                   const LossParams& lp) {
  int m = v.rows(), d = v.cols();
  double inv_tau = 1.0 / lp.tau;
  std::vector<double> logits(static_cast<size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += v.at(i, k) * v.at(j, k);
      logits[static_cast<size_t>(i) * m + j] = s * inv_tau;
    }
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
      if (j != i) mx = std::max(mx, logits[static_cast<size_t>(i) * m + j]);
    double s = 0.0;
    for (int j = 0; j < m; ++j)
      if (j != i) s += std::exp(logits[static_cast<size_t>(i) * m + j] - mx);
    double denom = mx + std::log(s);
    total += denom - logits[static_cast<size_t>(i) * m + pair[i]];
  }
  return total / m;
}

// Scalar-loop reference of simsiam_roma with the identity map.
double simsiam_ref(const Tensor& p1, const Tensor& p2, const Tensor& z1,
                   const Tensor& z2) {
  int B = p1.rows(), d = p1.cols();
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (int j = 0; j < d; ++j) s1 += p1.at(i, j) * z2.at(i, j);
    for (int j = 0; j < d; ++j) s2 += p2.at(i, j) * z1.at(i, j);
    total += (s1 + s2) * -0.5;
  }
  return total / B;
}

// Finite differences on raw (pre-normalization) leaves.
template <typename F>
double max_loss_grad_rel_err(std::vector<Tensor> leaves, F make_loss) {
  for (auto& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Graph g;
  Tensor loss = make_loss(g);
  g.backward(loss);
  const double h = 1e-4;
  double worst = 0.0;
  for (auto& t : leaves) {
    std::vector<double> analytic = t.grad();
    for (int i = 0; i < t.size(); ++i) {
      double save = t.values()[i];
      t.values()[i] = save + h;
      Graph gp;
      double fp = make_loss(gp).scalar_value();
      t.values()[i] = save - h;
      Graph gm;
      double fm = make_loss(gm).scalar_value();
      t.values()[i] = save;
      double fd = (fp - fm) / (2.0 * h);
      double err = std::abs(analytic[i] - fd) /
                   std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// bilinear_sim

TEST_CASE("bilinear_sim: identity map is the cosine of unit inputs") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  Tensor e1 = Tensor::row({1.0, 0.0, 0.0});
  Tensor e2 = Tensor::row({0.0, 1.0, 0.0});
  CHECK(losses::bilinear_sim(g, e1, e1, id).scalar_value() == 1.0);
  CHECK(losses::bilinear_sim(g, e1, e2, id).scalar_value() == 0.0);
}

TEST_CASE("bilinear_sim: 1x2 projection folds both inputs onto one direction") {
  Graph g;
  RandomMap m = RandomMap::placeholder(MapDistribution::normal, 1, 2, 0);
  m.generation_index = 0;
  m.L = Tensor(1, 2, {1.0, 1.0});
  Tensor u = Tensor::row({1.0, 0.0});
  Tensor v = Tensor::row({0.0, 1.0});
  CHECK(losses::bilinear_sim(g, u, v, m, true).scalar_value() == 1.0);
  CHECK(losses::bilinear_sim(g, u, v, m, false).scalar_value() == 1.0);
}

// ---------------------------------------------------------------------------
// triplet_ce_loss closed forms (gamma=1, lambda=1, tau=0.5, identity map)

TEST_CASE("triplet_ce_loss closed forms") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  lp.gamma = 1.0;
  lp.lambda = 1.0;  // for arithmetic clarity; defaults are lambda=8
  lp.tau = 0.5;
  Tensor e1 = Tensor::row({1.0, 0.0});
  Tensor e2 = Tensor::row({0.0, 1.0});

  SUBCASE("all three embeddings equal: hinge=1, CE=log 2") {
    TripletBatch b{e1, e1, e1};
    double v = losses::triplet_ce_loss(g, b, lp, id).scalar_value();
    CHECK(v == doctest::Approx(1.0 + kLog2).epsilon(1e-12));
  }
  SUBCASE("ideal triplet: hinge=0, CE=log(1+e^-2)") {
    TripletBatch b{e1, e1, e2};
    double v = losses::triplet_ce_loss(g, b, lp, id).scalar_value();
    CHECK(v == doctest::Approx(kLog1pExpM2).epsilon(1e-12));
  }
  SUBCASE("adversarial triplet: hinge=2, CE=log(1+e^2)") {
    TripletBatch b{e1, e2, e1};
    double v = losses::triplet_ce_loss(g, b, lp, id).scalar_value();
    CHECK(v == doctest::Approx(2.0 + kLog1pExpP2).epsilon(1e-12));
  }
  SUBCASE("default lambda=8 on the symmetric case: gamma + 8 log 2") {
    LossParams lp8;  // defaults: gamma 1, lambda 8, tau 0.5
    TripletBatch b{e1, e1, e1};
    double v = losses::triplet_ce_loss(g, b, lp8, id).scalar_value();
    CHECK(v == doctest::Approx(1.0 + 8.0 * kLog2).epsilon(1e-12));
  }
  SUBCASE("printed-form flag rewards dissimilar positives") {
    LossParams hinge_only = lp;
    hinge_only.lambda = 0.0;
    LossParams faithful = hinge_only;
    faithful.faithful_eq1 = true;
    TripletBatch ideal{e1, e1, e2};
    // standard hinge is 0 on the ideal triplet; the printed form gives [1-0+1]+
    CHECK(losses::triplet_ce_loss(g, ideal, hinge_only, id).scalar_value() == 0.0);
    CHECK(losses::triplet_ce_loss(g, ideal, faithful, id).scalar_value() == 2.0);
  }
}

TEST_CASE("triplet_ce_loss input validation") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  Tensor e1 = Tensor::row({1.0, 0.0});
  Tensor bad = Tensor::row({0.5, 0.0});  // not unit
  CHECK_THROWS_AS(losses::triplet_ce_loss(g, {e1, e1, bad}, lp, id),
                  std::invalid_argument);
  Tensor nan = Tensor::row({std::numeric_limits<double>::quiet_NaN(), 0.0});
  CHECK_THROWS_AS(losses::triplet_ce_loss(g, {e1, nan, e1}, lp, id),
                  std::domain_error);
  Tensor e3 = Tensor::row({1.0, 0.0, 0.0});
  CHECK_THROWS_AS(losses::triplet_ce_loss(g, {e1, e1, e3}, lp, id),
                  std::invalid_argument);
  LossParams badp;
  badp.tau = 0.0;
  CHECK_THROWS_AS(losses::triplet_ce_loss(g, {e1, e1, e1}, badp, id),
                  std::invalid_argument);
}

// ---------------------------------------------------------------------------
// NT-Xent closed forms (tau=0.5, identity map)

TEST_CASE("nt_xent_roma closed forms") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;  // tau = 0.5
  std::vector<int> pair = {1, 0, 3, 2};

  SUBCASE("all four views identical: log 3 per anchor") {
    Tensor views(4, 2, {1, 0, 1, 0, 1, 0, 1, 0});
    double v = losses::nt_xent_roma(g, views, pair, lp, id).scalar_value();
    CHECK(v == doctest::Approx(kLog3).epsilon(1e-12));
  }
  SUBCASE("two orthogonal pairs: log(1 + 2 e^-2) per anchor") {
    Tensor views(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    double v = losses::nt_xent_roma(g, views, pair, lp, id).scalar_value();
    CHECK(v == doctest::Approx(kLog1p2ExpM2).epsilon(1e-12));
  }
  SUBCASE("identity RandomMap and explicit L=I agree bit-for-bit") {
    Rng rng(5);
    Graph g2;
    Tensor views = g2.l2_normalize_rows(random_rows(rng, 6, 8)).detach();
    std::vector<int> p6 = {1, 0, 3, 2, 5, 4};
    RandomMap expl = RandomMap::placeholder(MapDistribution::normal, 8, 8, 0);
    expl.generation_index = 0;
    expl.L = Tensor::identity(8);
    double a = losses::nt_xent_roma(g2, views, p6, lp, id).scalar_value();
    double b =
        losses::nt_xent_roma(g2, views, p6, lp, expl, false).scalar_value();
    CHECK(a == b);
  }
}

TEST_CASE("nt_xent_roma validates the pair involution and batch size") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  Tensor views(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  CHECK_THROWS_AS(losses::nt_xent_roma(g, views, {1, 0, 3, 3}, lp, id),
                  std::invalid_argument);  // not an involution
  CHECK_THROWS_AS(losses::nt_xent_roma(g, views, {0, 1, 2, 3}, lp, id),
                  std::invalid_argument);  // fixed points
  Tensor two(2, 2, {1, 0, 1, 0});
  CHECK_THROWS_AS(losses::nt_xent_roma(g, two, {1, 0}, lp, id),
                  std::invalid_argument);  // N < 2
}

TEST_CASE("nt_xent_roma is permutation invariant") {
  Rng rng(17);
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  int m = 8;
  Tensor views = g.l2_normalize_rows(random_rows(rng, m, 6)).detach();
  std::vector<int> pair = {1, 0, 3, 2, 5, 4, 7, 6};
  double base = losses::nt_xent_roma(g, views, pair, lp, id).scalar_value();

  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[i] = i;
  Rng shuffler(99);
  shuffler.shuffle(perm);
  // perm[i] = new position of old row i
  Tensor permuted(m, 6);
  std::vector<int> ppair(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < 6; ++j) permuted.at(perm[i], j) = views.at(i, j);
    ppair[perm[i]] = perm[pair[i]];
  }
  double shuffled =
      losses::nt_xent_roma(g, permuted, ppair, lp, id).scalar_value();
  CHECK(shuffled == doctest::Approx(base).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// SimSiam closed forms

TEST_CASE("simsiam_roma closed forms and stop-gradient") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  Tensor e1 = Tensor::row({1.0, 0.0});
  Tensor e2 = Tensor::row({0.0, 1.0});

  SUBCASE("perfect alignment gives -1") {
    double v = losses::simsiam_roma(g, e1, e2, e2, e1, id).scalar_value();
    CHECK(v == -1.0);
  }
  SUBCASE("orthogonal predictor/target gives 0") {
    double v = losses::simsiam_roma(g, e1, e1, e2, e2, id).scalar_value();
    CHECK(v == 0.0);
  }
  SUBCASE("gradient reaches p1/p2 and never z1/z2") {
    Rng rng(3);
    Graph g2;
    Tensor p1 = g2.l2_normalize_rows(random_rows(rng, 3, 5)).detach();
    Tensor p2 = g2.l2_normalize_rows(random_rows(rng, 3, 5)).detach();
    Tensor z1 = g2.l2_normalize_rows(random_rows(rng, 3, 5)).detach();
    Tensor z2 = g2.l2_normalize_rows(random_rows(rng, 3, 5)).detach();
    for (Tensor* t : {&p1, &p2, &z1, &z2}) t->set_requires_grad(true);
    RandomMap m = rngmap::generate(MapDistribution::normal, 4, 5, 7, 0);
    Graph g3;
    Tensor loss = losses::simsiam_roma(g3, p1, p2, z1, z2, m);
    g3.backward(loss);
    double gp = 0.0;
    for (double x : p1.grad()) gp += std::abs(x);
    for (double x : p2.grad()) gp += std::abs(x);
    CHECK(gp > 0.0);
    for (double x : z1.grad()) CHECK(x == 0.0);
    for (double x : z2.grad()) CHECK(x == 0.0);
  }
}

TEST_CASE("simsiam_roma with a random map matches an independent recomputation") {
  Rng rng(23);
  Graph g;
  int B = 4, d = 6, dout = 3;
  Tensor p1 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
  Tensor p2 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
  Tensor z1 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
  Tensor z2 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
  RandomMap m = rngmap::generate(MapDistribution::uniform, dout, d, 31, 0);

  double lib = losses::simsiam_roma(g, p1, p2, z1, z2, m, true).scalar_value();

  auto proj_norm = [&](const Tensor& x, int row) {
    std::vector<double> out(dout, 0.0);
    for (int o = 0; o < dout; ++o)
      for (int j = 0; j < d; ++j) out[o] += m.L.at(o, j) * x.at(row, j);
    double n = 0.0;
    for (double v : out) n += v * v;
    n = std::max(std::sqrt(n), 1e-12);
    for (double& v : out) v /= n;
    return out;
  };
  double ref = 0.0;
  for (int i = 0; i < B; ++i) {
    auto a1 = proj_norm(p1, i), b1 = proj_norm(z2, i);
    auto a2 = proj_norm(p2, i), b2 = proj_norm(z1, i);
    double s1 = 0.0, s2 = 0.0;
    for (int o = 0; o < dout; ++o) s1 += a1[o] * b1[o];
    for (int o = 0; o < dout; ++o) s2 += a2[o] * b2[o];
    ref += -0.5 * s1 - 0.5 * s2;
  }
  ref /= B;
  CHECK(std::abs(lib - ref) < 1e-10);
}

// ---------------------------------------------------------------------------
// Identity reduction against scalar-loop references

TEST_CASE("identity-map losses equal scalar references bit-for-bit") {
  Rng rng(41);
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;  // defaults gamma 1, lambda 8, tau 0.5
  for (int trial = 0; trial < 100; ++trial) {
    int B = 2 + static_cast<int>(rng.below(5));
    int d = 2 + static_cast<int>(rng.below(9));
    Tensor a = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
    Tensor p = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
    Tensor n = g.l2_normalize_rows(random_rows(rng, B, d)).detach();

    double lib = losses::triplet_ce_loss(g, {a, p, n}, lp, id).scalar_value();
    CHECK(lib == triplet_ce_ref(a, p, n, lp));

    Tensor views = g.l2_normalize_rows(random_rows(rng, 2 * B, d)).detach();
    std::vector<int> pair(2 * B);
    for (int i = 0; i < B; ++i) {
      pair[2 * i] = 2 * i + 1;
      pair[2 * i + 1] = 2 * i;
    }
    double lib_nt = losses::nt_xent_roma(g, views, pair, lp, id).scalar_value();
    CHECK(lib_nt == nt_xent_ref(views, pair, lp));

    Tensor z1 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
    Tensor z2 = g.l2_normalize_rows(random_rows(rng, B, d)).detach();
    double lib_ss = losses::simsiam_roma(g, a, p, z1, z2, id).scalar_value();
    CHECK(lib_ss == simsiam_ref(a, p, z1, z2));
  }
}

// ---------------------------------------------------------------------------
// Monotonicity and the zero-gradient plateau

TEST_CASE("triplet_ce_loss is monotone in s+ and s-") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;  // gamma 1, lambda 8, tau 0.5
  auto loss_at = [&](double sp, double sn) {
    TripletBatch b{unit2(1.0), unit2(sp), unit2(sn)};
    return losses::triplet_ce_loss(g, b, lp, id).scalar_value();
  };
  for (double sp = -1.0; sp <= 0.99; sp += 0.25)
    for (double sn = -1.0; sn <= 1.0; sn += 0.25) {
      CHECK(loss_at(sp + 0.25, sn) <= loss_at(sp, sn) + 1e-12);
      if (sn <= 0.99) CHECK(loss_at(sp, sn + 0.25) >= loss_at(sp, sn) - 1e-12);
    }
}

TEST_CASE("printed-form hinge flips the s+ monotonicity") {
  Graph g;
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  lp.lambda = 0.0;  // isolate the hinge
  lp.faithful_eq1 = true;
  auto loss_at = [&](double sp, double sn) {
    TripletBatch b{unit2(1.0), unit2(sp), unit2(sn)};
    return losses::triplet_ce_loss(g, b, lp, id).scalar_value();
  };
  // in the active region the printed form increases with s+
  CHECK(loss_at(0.5, 0.0) > loss_at(0.0, 0.0));
  CHECK(loss_at(0.9, 0.0) > loss_at(0.5, 0.0));
}

TEST_CASE("hinge contributes exactly zero gradient on its plateau") {
  RandomMap id = RandomMap::identity_map();
  LossParams lp;
  lp.gamma = 0.5;
  lp.lambda = 0.0;  // pure hinge

  auto check_zero_grads = [&](double sp, double sn) {
    Tensor a = unit2(1.0), p = unit2(sp), n = unit2(sn);
    for (Tensor* t : {&a, &p, &n}) {
      t->set_requires_grad(true);
      t->zero_grad();
    }
    Graph g;
    Tensor loss = losses::triplet_ce_loss(g, {a, p, n}, lp, id);
    g.backward(loss);
    for (Tensor* t : {&a, &p, &n})
      for (double x : t->grad()) CHECK(x == 0.0);
  };
  check_zero_grads(0.9, 0.2);    // strictly inside the plateau
  check_zero_grads(0.75, 0.25);  // exactly at the boundary: arg is exactly 0
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks, with and without a map

TEST_CASE("finite differences: triplet_ce_loss") {
  Rng rng(71);
  LossParams lp;
  RandomMap id = RandomMap::identity_map();
  int checked = 0;
  while (checked < 6) {
    int B = 3, d = 6;
    Tensor ra = random_rows(rng, B, d);
    Tensor rp = random_rows(rng, B, d);
    Tensor rn = random_rows(rng, B, d);
    RandomMap m = rngmap::generate(MapDistribution::normal, 4, d,
                                   1000 + checked, 0);
    bool use_map = checked % 2 == 1;
    const RandomMap& map = use_map ? m : id;

    // keep every row away from the hinge kink
    {
      Graph g;
      Tensor a = g.l2_normalize_rows(ra), p = g.l2_normalize_rows(rp),
             n = g.l2_normalize_rows(rn);
      Tensor pa = rngmap::project(g, map, a), pp = rngmap::project(g, map, p),
             pn = rngmap::project(g, map, n);
      Tensor arg = g.add_scalar(g.sub(g.row_sum(g.mul(pa, pn)),
                                      g.row_sum(g.mul(pa, pp))),
                                lp.gamma);
      bool near_kink = false;
      for (double x : arg.values())
        if (std::abs(x) < 1e-2) near_kink = true;
      if (near_kink) continue;
    }
    double err = max_loss_grad_rel_err({ra, rp, rn}, [&](Graph& g) {
      TripletBatch b{g.l2_normalize_rows(ra), g.l2_normalize_rows(rp),
                     g.l2_normalize_rows(rn)};
      return losses::triplet_ce_loss(g, b, lp, map);
    });
    CHECK(err < 1e-4);
    ++checked;
  }
}

TEST_CASE("finite differences: nt_xent_roma") {
  Rng rng(73);
  LossParams lp;
  RandomMap id = RandomMap::identity_map();
  std::vector<int> pair = {1, 0, 3, 2, 5, 4};
  for (int trial = 0; trial < 4; ++trial) {
    Tensor raw = random_rows(rng, 6, 5);
    RandomMap m =
        rngmap::generate(MapDistribution::uniform, 4, 5, 2000 + trial, 0);
    const RandomMap& map = trial % 2 == 1 ? m : id;
    double err = max_loss_grad_rel_err({raw}, [&](Graph& g) {
      return losses::nt_xent_roma(g, g.l2_normalize_rows(raw), pair, lp, map);
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite differences: simsiam_roma") {
  Rng rng(79);
  RandomMap id = RandomMap::identity_map();
  for (int trial = 0; trial < 4; ++trial) {
    Tensor rp1 = random_rows(rng, 3, 5), rp2 = random_rows(rng, 3, 5);
    Tensor rz1 = random_rows(rng, 3, 5), rz2 = random_rows(rng, 3, 5);
    RandomMap m =
        rngmap::generate(MapDistribution::rademacher, 4, 5, 3000 + trial, 0);
    const RandomMap& map = trial % 2 == 1 ? m : id;
    double err = max_loss_grad_rel_err({rp1, rp2}, [&](Graph& g) {
      return losses::simsiam_roma(g, g.l2_normalize_rows(rp1),
                                  g.l2_normalize_rows(rp2),
                                  g.l2_normalize_rows(rz1),
                                  g.l2_normalize_rows(rz2), map);
    });
    CHECK(err < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Shared map across the triplet's three projections

TEST_CASE("one map instance serves all similarity evaluations in a loss") {
  // With renormalize=false and L = c*I for a power-of-two c, similarities are
  // scaled by c^2 everywhere; the hinge/CE structure must see the same map for
  // anchor-positive and anchor-negative terms. Validated via the identity
  // s(u,v; cI) = c^2 * s(u,v; I).
  Graph g;
  Tensor u = unit2(0.6), v = unit2(-0.2);
  RandomMap two = RandomMap::placeholder(MapDistribution::normal, 2, 2, 0);
  two.generation_index = 0;
  two.L = Tensor(2, 2);
  two.L.at(0, 0) = two.L.at(1, 1) = 2.0;
  double raw = losses::bilinear_sim(g, u, v, RandomMap::identity_map()).scalar_value();
  double mapped = losses::bilinear_sim(g, u, v, two, false).scalar_value();
  CHECK(mapped == 4.0 * raw);
}
