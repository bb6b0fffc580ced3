#include "roma/encoder.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "roma/rng.hpp"

namespace roma {

void EncoderConfig::validate() const {
  if (backbone_widths.empty())
    throw std::invalid_argument("encoder.backbone_widths must be non-empty");
  for (int w : backbone_widths)
    if (w < 1) throw std::invalid_argument("encoder widths must be >= 1");
  if (projector_dim < 1)
    throw std::invalid_argument("encoder.projector_dim must be >= 1");
  if (leaky_slope < 0.0)
    throw std::invalid_argument("encoder.leaky_slope must be >= 0");
}

namespace {

FcBn make_layer(int in, int out, bool has_bn, uint64_t seed) {
  FcBn l;
  Rng rng(seed);
  double bound = std::sqrt(3.0 / in);
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (double& x : w) x = rng.uniform(-bound, bound);
  l.W = Tensor(in, out, std::move(w), true);
  l.b = Tensor(1, out, true);
  l.has_bn = has_bn;
  if (has_bn) {
    l.gamma = Tensor::full(1, out, 1.0);
    l.gamma.set_requires_grad(true);
    l.beta = Tensor(1, out, true);
    l.stats = BnStats(out);
  }
  return l;
}

Tensor apply_layer(Graph& g, FcBn& l, const Tensor& x, bool training) {
  Tensor y = g.add_rowvec(g.matmul(x, l.W), l.b);
  if (l.has_bn) y = g.batch_norm(y, l.gamma, l.beta, l.stats, training);
  return y;
}

}  // namespace

Encoder Encoder::init(const EncoderConfig& cfg, int input_dim, uint64_t seed) {
  cfg.validate();
  if (input_dim < 1) throw std::invalid_argument("encoder input_dim must be >= 1");
  Encoder e;
  e.cfg_ = cfg;
  e.input_dim_ = input_dim;

  int layer_idx = 0;
  int in = input_dim;
  for (int w : cfg.backbone_widths) {
    e.backbone_.push_back(
        make_layer(in, w, true, derive_seed(seed, "init", layer_idx++)));
    in = w;
  }
  for (int k = 0; k < 3; ++k) {
    e.projector_.push_back(make_layer(in, cfg.projector_dim, true,
                                      derive_seed(seed, "init", layer_idx++)));
    in = cfg.projector_dim;
  }
  if (cfg.predictor) {
    int d = cfg.projector_dim;
    int bottleneck = std::max(1, d / 4);
    e.predictor_.push_back(
        make_layer(d, bottleneck, true, derive_seed(seed, "init", layer_idx++)));
    e.predictor_.push_back(make_layer(bottleneck, d, false,
                                      derive_seed(seed, "init", layer_idx++)));
  }
  return e;
}

int Encoder::feature_dim() const { return cfg_.backbone_widths.back(); }
int Encoder::embedding_dim() const { return cfg_.projector_dim; }

// `activations`: number of leading layers followed by LeakyReLU.
Tensor Encoder::run_chain(Graph& g, std::vector<FcBn>& chain, const Tensor& x,
                          bool training, int activations) {
  Tensor h = x;
  for (size_t i = 0; i < chain.size(); ++i) {
    h = apply_layer(g, chain[i], h, training);
    if (static_cast<int>(i) < activations)
      h = g.leaky_relu(h, cfg_.leaky_slope);
  }
  return h;
}

Tensor Encoder::backbone_features(Graph& g, const Tensor& x, bool training) {
  if (x.cols() != input_dim_)
    throw std::invalid_argument("encoder: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(input_dim_));
  // every backbone layer is activated
  return run_chain(g, backbone_, x, training,
                   static_cast<int>(backbone_.size()));
}

Tensor Encoder::encode_raw(Graph& g, const Tensor& x, bool training) {
  Tensor h = backbone_features(g, x, training);
  // projector: LeakyReLU after the first two layers, BN-only on the last
  return run_chain(g, projector_, h, training, 2);
}

Tensor Encoder::encode(Graph& g, const Tensor& x, bool training) {
  return g.l2_normalize_rows(encode_raw(g, x, training));
}

Tensor Encoder::predict(Graph& g, const Tensor& z_raw, bool training) {
  if (predictor_.empty())
    throw std::logic_error("encoder: predictor head not configured");
  if (z_raw.cols() != cfg_.projector_dim)
    throw std::invalid_argument("predict: input width mismatch");
  Tensor p = run_chain(g, predictor_, z_raw, training, 1);
  return g.l2_normalize_rows(p);
}

std::string Encoder::describe() const {
  std::ostringstream os;
  os << "input: " << input_dim_ << "\n";
  int in = input_dim_;
  for (size_t i = 0; i < backbone_.size(); ++i) {
    int out = backbone_[i].W.cols();
    os << "backbone." << i << ": fc " << in << "->" << out
       << " bn leaky_relu(" << cfg_.leaky_slope << ")\n";
    in = out;
  }
  for (size_t i = 0; i < projector_.size(); ++i) {
    int out = projector_[i].W.cols();
    os << "projector." << i << ": fc " << in << "->" << out << " bn";
    if (i < 2) os << " leaky_relu(" << cfg_.leaky_slope << ")";
    os << "\n";
    in = out;
  }
  for (size_t i = 0; i < predictor_.size(); ++i) {
    int out = predictor_[i].W.cols();
    os << "predictor." << i << ": fc " << in << "->" << out;
    if (predictor_[i].has_bn)
      os << " bn leaky_relu(" << cfg_.leaky_slope << ")";
    os << "\n";
    in = out;
  }
  os << "output: l2-normalized, dim " << cfg_.projector_dim << "\n";
  return os.str();
}

std::vector<Tensor*> Encoder::parameters() {
  std::vector<Tensor*> out;
  for (auto* chain : {&backbone_, &projector_, &predictor_})
    for (FcBn& l : *chain) {
      out.push_back(&l.W);
      out.push_back(&l.b);
      if (l.has_bn) {
        out.push_back(&l.gamma);
        out.push_back(&l.beta);
      }
    }
  return out;
}

std::vector<Tensor*> Encoder::decayable_parameters() {
  std::vector<Tensor*> out;
  for (auto* chain : {&backbone_, &projector_, &predictor_})
    for (FcBn& l : *chain) out.push_back(&l.W);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Encoder::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto emit = [&](const char* prefix, std::vector<FcBn>& chain) {
    for (size_t i = 0; i < chain.size(); ++i) {
      std::string base = std::string(prefix) + "." + std::to_string(i);
      out.emplace_back(base + ".W", &chain[i].W);
      out.emplace_back(base + ".b", &chain[i].b);
      if (chain[i].has_bn) {
        out.emplace_back(base + ".bn.gamma", &chain[i].gamma);
        out.emplace_back(base + ".bn.beta", &chain[i].beta);
      }
    }
  };
  emit("backbone", backbone_);
  emit("projector", projector_);
  emit("predictor", predictor_);
  return out;
}

std::vector<std::pair<std::string, BnStats*>> Encoder::named_stats() {
  std::vector<std::pair<std::string, BnStats*>> out;
  auto emit = [&](const char* prefix, std::vector<FcBn>& chain) {
    for (size_t i = 0; i < chain.size(); ++i)
      if (chain[i].has_bn)
        out.emplace_back(std::string(prefix) + "." + std::to_string(i) + ".bn",
                         &chain[i].stats);
  };
  emit("backbone", backbone_);
  emit("projector", projector_);
  emit("predictor", predictor_);
  return out;
}

}  // namespace roma
