#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "roma/config.hpp"

using namespace roma;

TEST_CASE("config: defaults serialize and round-trip byte-identically") {
  ExperimentConfig def = config::defaults();
  std::string text = config::to_json_text(def);
  ExperimentConfig parsed = config::from_json_text(text);
  CHECK(config::to_json_text(parsed) == text);

  // Spot-check a few defaults against the struct initializers.
  CHECK(parsed.data.source == "synthetic");
  CHECK(parsed.data.k_classes == 10);
  CHECK(parsed.data.seed == 42);
  CHECK(parsed.data.train_fraction == 0.8);
  CHECK(parsed.train.loss == LossKind::triplet_ce);
  CHECK(parsed.train.loss_params.gamma == 1.0);
  CHECK(parsed.train.loss_params.lambda == 8.0);
  CHECK(parsed.train.loss_params.tau == 0.5);
  CHECK(parsed.train.loss_params.hinge_weight == 1.0);
  CHECK(parsed.train.map.schedule.policy == RegenPolicy::per_epoch);
  CHECK(parsed.train.seed == 1);
  CHECK(parsed.eval.probe.epochs == 100);
  CHECK(parsed.eval.probe.base_lr == 30.0);
  CHECK(parsed.eval.knn_k == 20);
}

TEST_CASE("config: empty document means all defaults") {
  ExperimentConfig parsed = config::from_json_text("{}");
  CHECK(config::to_json_text(parsed) == config::to_json_text(config::defaults()));
}

TEST_CASE("config: every key is parsed into its field") {
  const std::string text = R"({
    "data": {
      "source": "synthetic", "path": "x.bin",
      "k_classes": 5, "per_class": 33, "dim": 12, "spread": 0.25,
      "seed": 7, "train_fraction": 0.6,
      "augment": {
        "noise_sigma": 0.2, "scale_lo": 0.8, "scale_hi": 1.3, "mask_prob": 0.1,
        "image_mode": false, "crop_scale_lo": 0.5, "crop_scale_hi": 0.9,
        "flip_prob": 0.25, "brightness": 0.4, "contrast": 0.3,
        "grayscale_prob": 0.2, "blur_prob": 0.15, "solarize_prob": 0.05
      }
    },
    "encoder": {
      "backbone_widths": [64, 32], "projector_dim": 16,
      "predictor": true, "leaky_slope": 0.2
    },
    "loss": {
      "kind": "nt_xent", "gamma": 2.0, "lambda": 4.0, "tau": 0.25,
      "hinge_weight": 0.5, "faithful_eq1": true
    },
    "random": {
      "distribution": "uniform", "dim": 8, "policy": "per_k_epochs", "k": 3,
      "scale_entries": false, "renormalize": false
    },
    "train": {
      "epochs": 17, "batch_size": 48, "base_lr": 0.7, "weight_decay": 1e-4,
      "momentum": 0.85, "precision": "f32", "checkpoint_every": 5, "seed": 99
    },
    "eval": {
      "probe_epochs": 60, "probe_batch_size": 32, "probe_base_lr": 10.0,
      "probe_weight_decay": 1e-5, "probe_momentum": 0.8, "probe_seed": 17,
      "knn_k": 5
    }
  })";
  ExperimentConfig c = config::from_json_text(text);

  CHECK(c.data.path == "x.bin");
  CHECK(c.data.k_classes == 5);
  CHECK(c.data.per_class == 33);
  CHECK(c.data.dim == 12);
  CHECK(c.data.spread == 0.25);
  CHECK(c.data.seed == 7);
  CHECK(c.data.train_fraction == 0.6);
  CHECK(c.data.augment.noise_sigma == 0.2);
  CHECK(c.data.augment.scale_lo == 0.8);
  CHECK(c.data.augment.scale_hi == 1.3);
  CHECK(c.data.augment.mask_prob == 0.1);
  CHECK(c.data.augment.image_mode == false);
  CHECK(c.data.augment.crop_scale_lo == 0.5);
  CHECK(c.data.augment.crop_scale_hi == 0.9);
  CHECK(c.data.augment.flip_prob == 0.25);
  CHECK(c.data.augment.brightness == 0.4);
  CHECK(c.data.augment.contrast == 0.3);
  CHECK(c.data.augment.grayscale_prob == 0.2);
  CHECK(c.data.augment.blur_prob == 0.15);
  CHECK(c.data.augment.solarize_prob == 0.05);

  CHECK(c.train.encoder.backbone_widths == std::vector<int>{64, 32});
  CHECK(c.train.encoder.projector_dim == 16);
  CHECK(c.train.encoder.predictor == true);
  CHECK(c.train.encoder.leaky_slope == 0.2);

  CHECK(c.train.loss == LossKind::nt_xent);
  CHECK(c.train.loss_params.gamma == 2.0);
  CHECK(c.train.loss_params.lambda == 4.0);
  CHECK(c.train.loss_params.tau == 0.25);
  CHECK(c.train.loss_params.hinge_weight == 0.5);
  CHECK(c.train.loss_params.faithful_eq1 == true);

  // symmetrize only applies to the triplet loss, so it gets its own parse.
  ExperimentConfig sym = config::from_json_text(
      R"({"loss": {"kind": "triplet_ce", "symmetrize": true}})");
  CHECK(sym.train.symmetrize == true);

  CHECK(c.train.map.distribution == MapDistribution::uniform);
  CHECK(c.train.map.dim == 8);
  CHECK(c.train.map.schedule.policy == RegenPolicy::per_k_epochs);
  CHECK(c.train.map.schedule.k == 3);
  CHECK(c.train.map.scale_entries == false);
  CHECK(c.train.map.renormalize == false);

  CHECK(c.train.epochs == 17);
  CHECK(c.train.batch_size == 48);
  CHECK(c.train.base_lr == 0.7);
  CHECK(c.train.weight_decay == 1e-4);
  CHECK(c.train.momentum == 0.85);
  CHECK(c.train.precision == Precision::f32);
  CHECK(c.train.checkpoint_every == 5);
  CHECK(c.train.seed == 99);

  CHECK(c.eval.probe.epochs == 60);
  CHECK(c.eval.probe.batch_size == 32);
  CHECK(c.eval.probe.base_lr == 10.0);
  CHECK(c.eval.probe.weight_decay == 1e-5);
  CHECK(c.eval.probe.momentum == 0.8);
  CHECK(c.eval.probe.seed == 17);
  CHECK(c.eval.knn_k == 5);

  // The augment keys live under data; the train-side copy is kept in sync.
  CHECK(c.train.augment.noise_sigma == 0.2);
  CHECK(c.resolved_train().augment.mask_prob == 0.1);
}

TEST_CASE("config: round-trip preserves non-default values") {
  ExperimentConfig c = config::defaults();
  c.data.k_classes = 3;
  c.data.augment.noise_sigma = 0.33;
  c.train.loss = LossKind::simsiam;
  c.train.encoder.predictor = true;
  c.train.map.distribution = MapDistribution::rademacher;
  c.train.map.schedule.policy = RegenPolicy::none;
  c.train.precision = Precision::f32;
  c.eval.knn_k = 7;
  std::string text = config::to_json_text(c);
  ExperimentConfig back = config::from_json_text(text);
  CHECK(config::to_json_text(back) == text);
  CHECK(back.train.loss == LossKind::simsiam);
  CHECK(back.train.map.distribution == MapDistribution::rademacher);
  CHECK(back.train.map.schedule.policy == RegenPolicy::none);
  CHECK(back.train.precision == Precision::f32);
}

TEST_CASE("config: unknown keys are rejected by qualified name") {
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"trian": {}})"),
                       "unknown config key \"trian\"", ConfigError);
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"train": {"epohcs": 3}})"),
                       "unknown config key \"train.epohcs\"", ConfigError);
  CHECK_THROWS_WITH_AS(
      config::from_json_text(R"({"data": {"augment": {"noise": 0.1}}})"),
      "unknown config key \"data.augment.noise\"", ConfigError);
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"loss": {"margin": 1.0}})"),
                       "unknown config key \"loss.margin\"", ConfigError);
}

TEST_CASE("config: type mismatches name the key") {
  // Integer keys reject floats outright (silent truncation would be worse).
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"train": {"epochs": 1.5}})"),
                       "config key \"train.epochs\": expected integer",
                       ConfigError);
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"loss": {"tau": "hot"}})"),
                       "config key \"loss.tau\": expected number", ConfigError);
  CHECK_THROWS_WITH_AS(
      config::from_json_text(R"({"train": {"seed": -1}})"),
      "config key \"train.seed\": expected non-negative integer", ConfigError);
  CHECK_THROWS_WITH_AS(
      config::from_json_text(R"({"encoder": {"backbone_widths": 64}})"),
      "config key \"encoder.backbone_widths\": expected array of integers",
      ConfigError);
  CHECK_THROWS_WITH_AS(
      config::from_json_text(R"({"encoder": {"backbone_widths": [64, "x"]}})"),
      "config key \"encoder.backbone_widths\": expected array of integers",
      ConfigError);
  CHECK_THROWS_WITH_AS(
      config::from_json_text(R"({"loss": {"symmetrize": 1}})"),
      "config key \"loss.symmetrize\": expected boolean", ConfigError);
  CHECK_THROWS_WITH_AS(config::from_json_text(R"({"data": 3})"),
                       "config key \"data\": expected object", ConfigError);
}

TEST_CASE("config: bad enum values name the key") {
  CHECK_THROWS_AS(config::from_json_text(R"({"loss": {"kind": "tripley"}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      config::from_json_text(R"({"random": {"distribution": "gausian"}})"),
      ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"random": {"policy": "never"}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      config::from_json_text(R"({"train": {"precision": "f16"}})"),
      ConfigError);
  // The message carries the key path so the user can find the offender.
  try {
    config::from_json_text(R"({"loss": {"kind": "tripley"}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("loss.kind") != std::string::npos);
  }
}

TEST_CASE("config: malformed documents are ConfigError") {
  CHECK_THROWS_AS(config::from_json_text("{"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(config::from_json_text(""), ConfigError);
}

TEST_CASE("config: semantic validation") {
  // data-section violations surface as ConfigError...
  CHECK_THROWS_AS(
      config::from_json_text(R"({"data": {"train_fraction": 1.0}})"),
      ConfigError);
  CHECK_THROWS_AS(
      config::from_json_text(R"({"data": {"train_fraction": 0.0}})"),
      ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"data": {"source": "mnist"}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      config::from_json_text(R"({"data": {"source": "cifar_binary"}})"),
      ConfigError);  // file sources need a path
  CHECK_THROWS_AS(config::from_json_text(R"({"data": {"k_classes": 1}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::from_json_text(R"({"eval": {"knn_k": 0}})"),
                  ConfigError);
  // ...while trainer/loss-level violations keep their own exception type.
  CHECK_THROWS_AS(config::from_json_text(R"({"train": {"batch_size": 1}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config::from_json_text(R"({"loss": {"hinge_weight": -1}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config::from_json_text(R"({"loss": {"tau": 0}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      config::from_json_text(R"({"loss": {"kind": "simsiam"}})"),
      std::invalid_argument);  // simsiam requires encoder.predictor
}

TEST_CASE("config: resolved_train applies the data-section augment") {
  ExperimentConfig c = config::defaults();
  c.data.augment.noise_sigma = 0.77;
  c.train.augment.noise_sigma = 0.11;  // stale copy, must be overridden
  TrainConfig t = c.resolved_train();
  CHECK(t.augment.noise_sigma == 0.77);
  CHECK(t.epochs == c.train.epochs);
}

TEST_CASE("config: save/load through a file") {
  ExperimentConfig c = config::defaults();
  c.data.per_class = 44;
  c.train.base_lr = 0.123;
  const std::string path = "test_config_tmp.json";
  config::save(c, path);
  ExperimentConfig back = config::load(path);
  CHECK(back.data.per_class == 44);
  CHECK(back.train.base_lr == 0.123);
  CHECK(config::to_json_text(back) == config::to_json_text(c));
  std::remove(path.c_str());

  CHECK_THROWS_AS(config::load("no_such_file_here.json"), ConfigError);
}
