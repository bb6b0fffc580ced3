#include "roma/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace roma {

using ordered_json = nlohmann::ordered_json;

void DataConfig::validate() const {
  if (source != "synthetic" && source != "cifar_binary" && source != "rmds")
    throw ConfigError("config key \"data.source\": must be one of "
                      "\"synthetic\", \"cifar_binary\", \"rmds\"");
  if (source != "synthetic" && path.empty())
    throw ConfigError("config key \"data.path\": required for source \"" +
                      source + "\"");
  if (source == "synthetic") {
    if (k_classes < 2)
      throw ConfigError("config key \"data.k_classes\": must be >= 2");
    if (per_class < 1)
      throw ConfigError("config key \"data.per_class\": must be >= 1");
    if (dim < 2) throw ConfigError("config key \"data.dim\": must be >= 2");
    if (spread < 0.0)
      throw ConfigError("config key \"data.spread\": must be >= 0");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError(
        "config key \"data.train_fraction\": must be strictly between 0 and 1");
  augment.validate();
}

void EvalSettings::validate() const {
  probe.validate();
  if (knn_k < 1) throw ConfigError("config key \"eval.knn_k\": must be >= 1");
}

void ExperimentConfig::validate() const {
  data.validate();
  resolved_train().validate();
  eval.validate();
}

namespace config {

namespace {

std::string precision_to_string(Precision p) {
  return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision: " + s);
}

// One config section: typed getters record which keys they touched so that
// finish() can reject typos by name.
class Section {
 public:
  Section(const ordered_json* obj, std::string path)
      : obj_(obj), path_(std::move(path)) {}

  void get(const char* key, bool& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_boolean()) fail(key, "expected boolean");
    out = v->get<bool>();
  }

  void get(const char* key, int& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number_integer()) fail(key, "expected integer");
    long long raw = v->get<long long>();
    if (raw < std::numeric_limits<int>::min() ||
        raw > std::numeric_limits<int>::max())
      fail(key, "integer out of range");
    out = static_cast<int>(raw);
  }

  void get(const char* key, uint64_t& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number_integer() ||
        (!v->is_number_unsigned() && v->get<long long>() < 0))
      fail(key, "expected non-negative integer");
    out = v->get<uint64_t>();
  }

  void get(const char* key, double& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number()) fail(key, "expected number");
    out = v->get<double>();
  }

  void get(const char* key, std::string& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_string()) fail(key, "expected string");
    out = v->get<std::string>();
  }

  void get(const char* key, std::vector<int>& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_array()) fail(key, "expected array of integers");
    std::vector<int> parsed;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(key, "expected array of integers");
      parsed.push_back(e.get<int>());
    }
    out = std::move(parsed);
  }

  // String key translated through a from_string converter (enums).
  template <typename T, typename FromString>
  void get_enum(const char* key, T& out, FromString from_string) {
    std::string s;
    bool present = obj_ && obj_->contains(key);
    get(key, s);
    if (!present) return;
    try {
      out = from_string(s);
    } catch (const std::invalid_argument& e) {
      fail(key, e.what());
    }
  }

  // Nested object section; marks the key as consumed.
  const ordered_json* subsection(const char* key) {
    const ordered_json* v = fetch(key);
    if (!v) return nullptr;
    if (!v->is_object()) fail(key, "expected object");
    return v;
  }

  // Rejects any key that no getter consumed.
  void finish() const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("unknown config key \"" + qualify(it.key()) + "\"");
    }
  }

 private:
  std::string qualify(const std::string& key) const {
    return path_ == "(root)" ? key : path_ + "." + key;
  }

  const ordered_json* fetch(const char* key) {
    seen_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw ConfigError("config key \"" + qualify(key) + "\": " + why);
  }

  const ordered_json* obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

void parse_augment(const ordered_json* obj, AugmentConfig& a) {
  Section s(obj, "data.augment");
  s.get("noise_sigma", a.noise_sigma);
  s.get("scale_lo", a.scale_lo);
  s.get("scale_hi", a.scale_hi);
  s.get("mask_prob", a.mask_prob);
  s.get("image_mode", a.image_mode);
  s.get("crop_scale_lo", a.crop_scale_lo);
  s.get("crop_scale_hi", a.crop_scale_hi);
  s.get("flip_prob", a.flip_prob);
  s.get("brightness", a.brightness);
  s.get("contrast", a.contrast);
  s.get("grayscale_prob", a.grayscale_prob);
  s.get("blur_prob", a.blur_prob);
  s.get("solarize_prob", a.solarize_prob);
  s.finish();
}

void parse_data(const ordered_json* obj, DataConfig& d) {
  Section s(obj, "data");
  s.get("source", d.source);
  s.get("path", d.path);
  s.get("k_classes", d.k_classes);
  s.get("per_class", d.per_class);
  s.get("dim", d.dim);
  s.get("spread", d.spread);
  s.get("seed", d.seed);
  s.get("train_fraction", d.train_fraction);
  parse_augment(s.subsection("augment"), d.augment);
  s.finish();
}

void parse_encoder(const ordered_json* obj, EncoderConfig& e) {
  Section s(obj, "encoder");
  s.get("backbone_widths", e.backbone_widths);
  s.get("projector_dim", e.projector_dim);
  s.get("predictor", e.predictor);
  s.get("leaky_slope", e.leaky_slope);
  s.finish();
}

void parse_loss(const ordered_json* obj, TrainConfig& t) {
  Section s(obj, "loss");
  s.get_enum("kind", t.loss, loss_kind_from_string);
  s.get("gamma", t.loss_params.gamma);
  s.get("lambda", t.loss_params.lambda);
  s.get("tau", t.loss_params.tau);
  s.get("hinge_weight", t.loss_params.hinge_weight);
  s.get("faithful_eq1", t.loss_params.faithful_eq1);
  s.get("symmetrize", t.symmetrize);
  s.finish();
}

void parse_random(const ordered_json* obj, RandomMapConfig& m) {
  Section s(obj, "random");
  s.get_enum("distribution", m.distribution, map_distribution_from_string);
  s.get("dim", m.dim);
  s.get_enum("policy", m.schedule.policy, regen_policy_from_string);
  s.get("k", m.schedule.k);
  s.get("scale_entries", m.scale_entries);
  s.get("renormalize", m.renormalize);
  s.finish();
}

void parse_train(const ordered_json* obj, TrainConfig& t) {
  Section s(obj, "train");
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("base_lr", t.base_lr);
  s.get("weight_decay", t.weight_decay);
  s.get("momentum", t.momentum);
  s.get_enum("precision", t.precision, precision_from_string);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("seed", t.seed);
  s.finish();
}

void parse_eval(const ordered_json* obj, EvalSettings& e) {
  Section s(obj, "eval");
  s.get("probe_epochs", e.probe.epochs);
  s.get("probe_batch_size", e.probe.batch_size);
  s.get("probe_base_lr", e.probe.base_lr);
  s.get("probe_weight_decay", e.probe.weight_decay);
  s.get("probe_momentum", e.probe.momentum);
  s.get("probe_seed", e.probe.seed);
  s.get("knn_k", e.knn_k);
  s.finish();
}

}  // namespace

ExperimentConfig defaults() { return ExperimentConfig{}; }

ExperimentConfig from_json_text(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!doc.is_object())
    throw ConfigError("config document must be a JSON object");

  ExperimentConfig cfg;
  {
    Section r(&doc, "(root)");
    parse_data(r.subsection("data"), cfg.data);
    parse_encoder(r.subsection("encoder"), cfg.train.encoder);
    parse_loss(r.subsection("loss"), cfg.train);
    parse_random(r.subsection("random"), cfg.train.map);
    parse_train(r.subsection("train"), cfg.train);
    parse_eval(r.subsection("eval"), cfg.eval);
    r.finish();
  }
  cfg.train.augment = cfg.data.augment;
  cfg.validate();
  return cfg;
}

ExperimentConfig load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string to_json_text(const ExperimentConfig& cfg) {
  ordered_json doc;
  const AugmentConfig& a = cfg.data.augment;
  doc["data"] = {
      {"source", cfg.data.source},
      {"path", cfg.data.path},
      {"k_classes", cfg.data.k_classes},
      {"per_class", cfg.data.per_class},
      {"dim", cfg.data.dim},
      {"spread", cfg.data.spread},
      {"seed", cfg.data.seed},
      {"train_fraction", cfg.data.train_fraction},
      {"augment",
       {
           {"noise_sigma", a.noise_sigma},
           {"scale_lo", a.scale_lo},
           {"scale_hi", a.scale_hi},
           {"mask_prob", a.mask_prob},
           {"image_mode", a.image_mode},
           {"crop_scale_lo", a.crop_scale_lo},
           {"crop_scale_hi", a.crop_scale_hi},
           {"flip_prob", a.flip_prob},
           {"brightness", a.brightness},
           {"contrast", a.contrast},
           {"grayscale_prob", a.grayscale_prob},
           {"blur_prob", a.blur_prob},
           {"solarize_prob", a.solarize_prob},
       }},
  };
  doc["encoder"] = {
      {"backbone_widths", cfg.train.encoder.backbone_widths},
      {"projector_dim", cfg.train.encoder.projector_dim},
      {"predictor", cfg.train.encoder.predictor},
      {"leaky_slope", cfg.train.encoder.leaky_slope},
  };
  doc["loss"] = {
      {"kind", to_string(cfg.train.loss)},
      {"gamma", cfg.train.loss_params.gamma},
      {"lambda", cfg.train.loss_params.lambda},
      {"tau", cfg.train.loss_params.tau},
      {"hinge_weight", cfg.train.loss_params.hinge_weight},
      {"faithful_eq1", cfg.train.loss_params.faithful_eq1},
      {"symmetrize", cfg.train.symmetrize},
  };
  doc["random"] = {
      {"distribution", to_string(cfg.train.map.distribution)},
      {"dim", cfg.train.map.dim},
      {"policy", to_string(cfg.train.map.schedule.policy)},
      {"k", cfg.train.map.schedule.k},
      {"scale_entries", cfg.train.map.scale_entries},
      {"renormalize", cfg.train.map.renormalize},
  };
  doc["train"] = {
      {"epochs", cfg.train.epochs},
      {"batch_size", cfg.train.batch_size},
      {"base_lr", cfg.train.base_lr},
      {"weight_decay", cfg.train.weight_decay},
      {"momentum", cfg.train.momentum},
      {"precision", precision_to_string(cfg.train.precision)},
      {"checkpoint_every", cfg.train.checkpoint_every},
      {"seed", cfg.train.seed},
  };
  doc["eval"] = {
      {"probe_epochs", cfg.eval.probe.epochs},
      {"probe_batch_size", cfg.eval.probe.batch_size},
      {"probe_base_lr", cfg.eval.probe.base_lr},
      {"probe_weight_decay", cfg.eval.probe.weight_decay},
      {"probe_momentum", cfg.eval.probe.momentum},
      {"probe_seed", cfg.eval.probe.seed},
      {"knn_k", cfg.eval.knn_k},
  };
  return doc.dump(2) + "\n";
}

void save(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << to_json_text(cfg);
}

}  // namespace config

}  // namespace roma
