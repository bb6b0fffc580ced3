#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>

#include "roma/encoder.hpp"
#include "roma/rng.hpp"
#include "roma/tensor.hpp"

using namespace roma;

namespace {

EncoderConfig small_cfg(bool predictor = false) {
  EncoderConfig cfg;
  cfg.backbone_widths = {16, 12};
  cfg.projector_dim = 10;
  cfg.predictor = predictor;
  return cfg;
}

Tensor random_input(Rng& rng, int n, int d) {
  std::vector<double> v(static_cast<size_t>(n) * d);
  for (double& x : v) x = rng.normal();
  return Tensor(n, d, std::move(v));
}

}  // namespace

TEST_CASE("structural description matches the projector contract") {
  Encoder enc = Encoder::init(small_cfg(true), 8, 1);
  std::string desc = enc.describe();
  INFO(desc);
  // exactly three projector layers
  CHECK(desc.find("projector.0:") != std::string::npos);
  CHECK(desc.find("projector.1:") != std::string::npos);
  CHECK(desc.find("projector.2:") != std::string::npos);
  CHECK(desc.find("projector.3:") == std::string::npos);
  // first two projector layers carry the activation, the last is BN-only
  auto line_of = [&](const char* tag) {
    size_t at = desc.find(tag);
    REQUIRE(at != std::string::npos);
    return desc.substr(at, desc.find('\n', at) - at);
  };
  CHECK(line_of("projector.0:").find("leaky_relu(0.2)") != std::string::npos);
  CHECK(line_of("projector.1:").find("leaky_relu(0.2)") != std::string::npos);
  CHECK(line_of("projector.2:").find("leaky_relu") == std::string::npos);
  CHECK(line_of("projector.2:").find("bn") != std::string::npos);
  // predictor: activated bottleneck, plain output layer
  CHECK(line_of("predictor.0:").find("fc 10->2") != std::string::npos);
  CHECK(line_of("predictor.0:").find("leaky_relu(0.2)") != std::string::npos);
  CHECK(line_of("predictor.1:").find("fc 2->10") != std::string::npos);
  CHECK(line_of("predictor.1:").find("bn") == std::string::npos);
  CHECK(desc.find("l2-normalized") != std::string::npos);
}

TEST_CASE("encode outputs unit rows, deterministic in seed") {
  Rng rng(5);
  Encoder enc = Encoder::init(small_cfg(), 8, 42);
  Tensor x = random_input(rng, 6, 8);
  Graph g;
  Tensor z = enc.encode(g, x, true);
  CHECK(z.rows() == 6);
  CHECK(z.cols() == 10);
  for (int i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < z.cols(); ++j) s += z.at(i, j) * z.at(i, j);
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
  }

  Encoder enc2 = Encoder::init(small_cfg(), 8, 42);
  Graph g2;
  Tensor z2 = enc2.encode(g2, x, true);
  CHECK(std::memcmp(z.values().data(), z2.values().data(),
                    z.size() * sizeof(double)) == 0);

  Encoder enc3 = Encoder::init(small_cfg(), 8, 43);
  Graph g3;
  Tensor z3 = enc3.encode(g3, x, true);
  CHECK(std::memcmp(z.values().data(), z3.values().data(),
                    z.size() * sizeof(double)) != 0);
}

TEST_CASE("zero input produces finite output") {
  Encoder enc = Encoder::init(small_cfg(), 8, 7);
  Tensor x(4, 8);  // all zeros
  Graph g;
  Tensor z = enc.encode(g, x, true);
  CHECK(z.all_finite());
}

TEST_CASE("eval-mode output is independent of batch composition") {
  Rng rng(11);
  Encoder enc = Encoder::init(small_cfg(), 8, 9);
  // drive the running stats away from init
  for (int warm = 0; warm < 3; ++warm) {
    Graph g;
    enc.encode(g, random_input(rng, 16, 8), true);
  }
  Tensor batch = random_input(rng, 5, 8);
  Graph g;
  Tensor zb = enc.backbone_features(g, batch, false);
  Tensor ze = enc.encode(g, batch, false);
  for (int i = 0; i < 5; ++i) {
    Tensor single(1, 8);
    for (int j = 0; j < 8; ++j) single.at(0, j) = batch.at(i, j);
    Graph gs;
    Tensor fs = enc.backbone_features(gs, single, false);
    Tensor zs = enc.encode(gs, single, false);
    for (int j = 0; j < fs.cols(); ++j) CHECK(fs.at(0, j) == zb.at(i, j));
    for (int j = 0; j < zs.cols(); ++j) CHECK(zs.at(0, j) == ze.at(i, j));
  }
}

TEST_CASE("train mode updates running stats, eval mode does not") {
  Rng rng(13);
  Encoder enc = Encoder::init(small_cfg(), 8, 3);
  auto stats = enc.named_stats();
  REQUIRE_FALSE(stats.empty());
  double before = stats[0].second->mean[0];
  Graph g;
  enc.encode(g, random_input(rng, 8, 8), true);
  double after_train = stats[0].second->mean[0];
  CHECK(after_train != before);
  Graph g2;
  enc.encode(g2, random_input(rng, 8, 8), false);
  CHECK(stats[0].second->mean[0] == after_train);
}

TEST_CASE("first-layer pre-activation variance is near 1 on unit-variance input") {
  Rng rng(17);
  int din = 64;
  EncoderConfig cfg;
  cfg.backbone_widths = {128};
  cfg.projector_dim = 8;
  Encoder enc = Encoder::init(cfg, din, 21);
  Tensor x = random_input(rng, 512, din);
  // pre-activation = x W + b, read off through the named parameter
  auto params = enc.named_parameters();
  Tensor* W = nullptr;
  for (auto& [name, t] : params)
    if (name == "backbone.0.W") W = t;
  REQUIRE(W != nullptr);
  Graph g;
  Tensor y = g.matmul(x, *W);
  double s = 0.0, s2 = 0.0;
  for (double v : y.values()) {
    s += v;
    s2 += v * v;
  }
  double n = y.size();
  double var = s2 / n - (s / n) * (s / n);
  CHECK(var > 0.5);
  CHECK(var < 2.0);
}

TEST_CASE("predict: shape preserved, unit rows, gradient reaches both heads") {
  Rng rng(19);
  Encoder enc = Encoder::init(small_cfg(true), 8, 23);
  Tensor x = random_input(rng, 4, 8);
  Graph g;
  Tensor z_raw = enc.encode_raw(g, x, true);
  Tensor p = enc.predict(g, z_raw, true);
  CHECK(p.rows() == 4);
  CHECK(p.cols() == 10);
  for (int i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < p.cols(); ++j) s += p.at(i, j) * p.at(i, j);
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
  }
  Tensor w = random_input(rng, 4, 10);
  Tensor loss = g.sum(g.mul(p, w));
  g.backward(loss);
  auto nonzero = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.grad()) s += std::abs(v);
    return s > 0.0;
  };
  auto named = enc.named_parameters();
  bool backbone_w = false, predictor_w = false;
  for (auto& [name, t] : named) {
    if (name == "backbone.0.W") backbone_w = nonzero(*t);
    if (name == "predictor.0.W") predictor_w = nonzero(*t);
  }
  CHECK(backbone_w);
  CHECK(predictor_w);
}

TEST_CASE("predictor access without the head is an error") {
  Encoder enc = Encoder::init(small_cfg(false), 8, 23);
  CHECK_FALSE(enc.has_predictor());
  Tensor z(4, 10);
  Graph g;
  CHECK_THROWS_AS(enc.predict(g, z, true), std::logic_error);
}

TEST_CASE("train mode rejects single-row batches (batch norm)") {
  Encoder enc = Encoder::init(small_cfg(), 8, 31);
  Tensor x(1, 8);
  Graph g;
  CHECK_THROWS_AS(enc.encode(g, x, true), std::invalid_argument);
  // eval mode is fine
  Tensor z = enc.encode(g, x, false);
  CHECK(z.all_finite());
}

TEST_CASE("input width is validated") {
  Encoder enc = Encoder::init(small_cfg(), 8, 31);
  Tensor x(4, 9);
  Graph g;
  CHECK_THROWS_AS(enc.encode(g, x, true), std::invalid_argument);
}

TEST_CASE("parameter inventory: names unique, decay set excludes bias and BN") {
  Encoder enc = Encoder::init(small_cfg(true), 8, 37);
  auto named = enc.named_parameters();
  std::set<std::string> names;
  for (auto& [name, t] : named) {
    CHECK(names.insert(name).second);
    CHECK(t != nullptr);
  }
  // backbone 2 + projector 3 layers, each W,b,gamma,beta; predictor layer 0
  // has bn, layer 1 is plain fc
  CHECK(named.size() == 5 * 4 + 4 + 2);
  auto decay = enc.decayable_parameters();
  CHECK(decay.size() == 7);  // one W per fc layer
  auto all = enc.parameters();
  CHECK(all.size() == named.size());
}
