#include "roma/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "roma/eval.hpp"

namespace roma {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("train.batch_size must be >= 2");
  if (base_lr <= 0.0) throw std::invalid_argument("train.base_lr must be > 0");
  if (weight_decay < 0.0)
    throw std::invalid_argument("train.weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("train.momentum must be in [0,1)");
  if (checkpoint_every < 0)
    throw std::invalid_argument("train.checkpoint_every must be >= 0");
  if (map.dim < 0) throw std::invalid_argument("random.dim must be >= 0");
  if (map.schedule.k < 1)
    throw std::invalid_argument("random.k_epochs must be >= 1");
  if (symmetrize && loss != LossKind::triplet_ce)
    throw std::invalid_argument(
        "train.symmetrize applies to the triplet loss only");
  if (loss == LossKind::simsiam && !encoder.predictor)
    throw std::invalid_argument("loss kind simsiam requires encoder.predictor");
  loss_params.validate();
  encoder.validate();
  augment.validate();
}

std::string metrics_csv_header() {
  return "epoch,step,loss,lr,emb_std,mean_offdiag_cos,regen_count";
}

std::string to_csv_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%lld,%.17g,%.17g,%.17g,%.17g,%lld",
                r.epoch, r.step, r.loss, r.lr, r.emb_std, r.mean_offdiag_cos,
                r.regen_count);
  return buf;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += to_csv_row(r) + "\n";
  return out;
}

namespace trainer {

double lr_at(long long step, long long total_steps, double effective_lr) {
  if (total_steps < 1)
    throw std::invalid_argument("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("lr_at: step out of [0, total_steps]");
  return effective_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

void sgd_init(SgdState& state, const std::vector<Tensor*>& params) {
  state.velocity.clear();
  state.step = 0;
  for (const Tensor* p : params)
    state.velocity.emplace_back(p->values().size(), 0.0);
}

void sgd_step(const std::vector<Tensor*>& params,
              const std::vector<bool>& decay, SgdState& state, double lr,
              double momentum, double weight_decay) {
  if (params.size() != state.velocity.size() || params.size() != decay.size())
    throw std::invalid_argument("sgd_step: state not aligned with parameters");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    std::vector<double>& v = state.velocity[i];
    std::vector<double>& pv = p.values();
    if (v.size() != pv.size())
      throw std::invalid_argument("sgd_step: velocity shape mismatch");
    const std::vector<double>& grad = p.grad();
    const bool has_grad = !grad.empty();
    if (has_grad && grad.size() != pv.size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch");
    const double wd = decay[i] ? weight_decay : 0.0;
    for (size_t j = 0; j < pv.size(); ++j) {
      double g = (has_grad ? grad[j] : 0.0) + wd * pv[j];
      v[j] = momentum * v[j] + g;
      pv[j] -= lr * v[j];
    }
    if (has_grad) p.zero_grad();
  }
  ++state.step;
}

namespace {

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
  int rows = 0;
  const int cols = parts.front()->cols();
  for (const Tensor* p : parts) rows += p->rows();
  Tensor out(rows, cols);
  int at = 0;
  for (const Tensor* p : parts) {
    std::copy(p->values().begin(), p->values().end(),
              out.values().begin() + static_cast<size_t>(at) * cols);
    at += p->rows();
  }
  return out;
}

std::vector<int> range_idx(int lo, int hi) {
  std::vector<int> idx(hi - lo);
  std::iota(idx.begin(), idx.end(), lo);
  return idx;
}

Tensor detach_rows(const Tensor& t, int lo, int hi) {
  Tensor out(hi - lo, t.cols());
  for (int i = lo; i < hi; ++i)
    for (int j = 0; j < t.cols(); ++j) out.at(i - lo, j) = t.at(i, j);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                  const std::string& out_dir) {
  cfg.validate();
  if (ds.size() < 2)
    throw std::invalid_argument("train: dataset needs at least 2 samples");

  const int N = ds.size();
  const int B = cfg.batch_size;
  const int rem = N % B;
  // batches of fewer than 2 samples are dropped (batch statistics need n >= 2)
  const int batches = N / B + (rem >= 2 ? 1 : 0);
  if (batches < 1)
    throw std::invalid_argument("train: no usable batch of size >= 2");
  const long long total_steps =
      std::max<long long>(1, static_cast<long long>(cfg.epochs) * batches);
  const double eff = cfg.effective_lr();

  Encoder enc = Encoder::init(cfg.encoder, ds.dim(), cfg.seed);
  const int d_emb = enc.embedding_dim();
  const int d_out = cfg.map.dim > 0 ? cfg.map.dim : std::max(1, d_emb / 2);
  RandomMap map =
      RandomMap::placeholder(cfg.map.distribution, d_out, d_emb,
                             derive_seed(cfg.seed, "maps"), cfg.map.scale_entries);

  std::vector<Tensor*> params = enc.parameters();
  std::vector<bool> decay(params.size(), false);
  for (Tensor* d : enc.decayable_parameters())
    for (size_t i = 0; i < params.size(); ++i)
      if (params[i] == d) decay[i] = true;
  SgdState opt;
  sgd_init(opt, params);

  TrainResult result;
  long long gstep = 0;
  long long regen = 0;

  auto flush_outputs = [&](Encoder& e, bool with_checkpoint) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/metrics.csv", metrics_to_csv(result.metrics));
    if (with_checkpoint)
      checkpoint::save_encoder(out_dir + "/checkpoint.bin", e);
  };

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle",
                                static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double ep_loss = 0.0, ep_std = 0.0, ep_cos = 0.0, last_lr = 0.0;

    for (int b = 0; b < batches; ++b) {
      const int lo = b * B;
      const int n = std::min(N, lo + B) - lo;

      RandomMap next = rngmap::maybe_regenerate(map, cfg.map.schedule, epoch, b);
      if (next.has_matrix() && next.generation_index != map.generation_index)
        ++regen;
      map = next;

      Tensor src(n, ds.dim());
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < ds.dim(); ++j)
          src.at(r, j) = ds.samples.at(order[lo + r], j);
      const uint64_t stream = derive_seed(cfg.seed, "augment",
                                          static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(b));

      Graph g;
      g.set_precision(cfg.precision);
      Tensor loss;
      Tensor diag_emb;
      const double lr = lr_at(gstep, total_steps, eff);

      auto nan_abort = [&](const std::string& detail) {
        MetricsRecord rec;
        rec.epoch = epoch + 1;
        rec.step = gstep;
        rec.loss = std::numeric_limits<double>::quiet_NaN();
        rec.lr = lr;
        rec.regen_count = regen;
        result.metrics.push_back(rec);
        flush_outputs(enc, false);
        throw NanAbortError("training aborted: non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", step " +
                            std::to_string(gstep) + " (lr " +
                            std::to_string(lr) + "): " + detail);
      };

      try {
        switch (cfg.loss) {
          case LossKind::triplet_ce: {
            TripletViews tv = data::make_triplets(src, cfg.augment, stream);
            Tensor stacked =
                concat_rows({&tv.anchors, &tv.positives, &tv.negatives});
            Tensor z = enc.encode(g, stacked, /*training=*/true);
            TripletBatch tb{g.gather_rows(z, range_idx(0, n)),
                            g.gather_rows(z, range_idx(n, 2 * n)),
                            g.gather_rows(z, range_idx(2 * n, 3 * n))};
            loss = losses::triplet_ce_loss(g, tb, cfg.loss_params, map,
                                           cfg.map.renormalize);
            if (cfg.symmetrize) {
              TripletBatch mirrored{tb.positives, tb.anchors, tb.negatives};
              Tensor l2 = losses::triplet_ce_loss(g, mirrored, cfg.loss_params,
                                                  map, cfg.map.renormalize);
              loss = g.scale(g.add(loss, l2), 0.5);
            }
            diag_emb = detach_rows(z, 0, n);
            break;
          }
          case LossKind::nt_xent: {
            PairViews pv = data::make_view_pairs(src, cfg.augment, stream);
            Tensor stacked = concat_rows({&pv.a, &pv.b});
            Tensor z = enc.encode(g, stacked, /*training=*/true);
            std::vector<int> pair_index(2 * n);
            for (int i = 0; i < n; ++i) {
              pair_index[i] = i + n;
              pair_index[i + n] = i;
            }
            loss = losses::nt_xent_roma(g, z, pair_index, cfg.loss_params, map,
                                        cfg.map.renormalize);
            diag_emb = detach_rows(z, 0, n);
            break;
          }
          case LossKind::simsiam: {
            PairViews pv = data::make_view_pairs(src, cfg.augment, stream);
            Tensor stacked = concat_rows({&pv.a, &pv.b});
            Tensor z_raw = enc.encode_raw(g, stacked, /*training=*/true);
            Tensor z = g.l2_normalize_rows(z_raw);
            Tensor p = enc.predict(g, z_raw, /*training=*/true);
            Tensor z1 = g.gather_rows(z, range_idx(0, n));
            Tensor z2 = g.gather_rows(z, range_idx(n, 2 * n));
            Tensor p1 = g.gather_rows(p, range_idx(0, n));
            Tensor p2 = g.gather_rows(p, range_idx(n, 2 * n));
            loss = losses::simsiam_roma(g, p1, p2, z1, z2, map,
                                        cfg.map.renormalize);
            diag_emb = detach_rows(z, 0, n);
            break;
          }
        }
      } catch (const std::domain_error& e) {
        nan_abort(e.what());
      }

      const double lval = loss.at(0, 0);
      if (!std::isfinite(lval)) nan_abort("loss value is not finite");

      g.backward(loss);
      sgd_step(params, decay, opt, lr, cfg.momentum, cfg.weight_decay);
      ++gstep;
      last_lr = lr;

      CollapseStats cs = eval::collapse_diagnostics(diag_emb);
      ep_loss += lval;
      ep_std += cs.emb_std;
      ep_cos += cs.mean_offdiag_cos;
    }

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.step = gstep;
    rec.loss = ep_loss / batches;
    rec.lr = last_lr;
    rec.emb_std = ep_std / batches;
    rec.mean_offdiag_cos = ep_cos / batches;
    rec.regen_count = regen;
    result.metrics.push_back(rec);

    if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof name, "/checkpoint_epoch%04d.bin", epoch + 1);
      std::filesystem::create_directories(out_dir);
      checkpoint::save_encoder(out_dir + name, enc);
    }
  }

  result.encoder = enc;
  result.total_steps = gstep;
  result.regen_count = regen;
  flush_outputs(result.encoder, true);
  return result;
}

}  // namespace trainer

namespace checkpoint {

namespace {

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int s = 0; s < 32; s += 8)
    buf.push_back(static_cast<char>((v >> s) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int s = 0; s < 64; s += 8)
    buf.push_back(static_cast<char>((v >> s) & 0xff));
}

struct Reader {
  const std::string& path;
  std::ifstream f;
  explicit Reader(const std::string& p)
      : path(p), f(p, std::ios::binary) {
    if (!f) throw std::runtime_error("cannot open " + p);
  }
  void bytes(void* dst, size_t n) {
    if (!f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n)))
      throw std::runtime_error(path + ": truncated checkpoint");
  }
  uint16_t u16() {
    unsigned char b[2];
    bytes(b, 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
};

}  // namespace

void save(const std::string& path, const std::vector<NamedArray>& arrays) {
  std::string buf;
  buf += "ROMA";
  put_u32(buf, 1);  // format version
  put_u32(buf, static_cast<uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    if (a.name.empty() || a.name.size() > 65535)
      throw std::invalid_argument("checkpoint array name length invalid");
    if (a.dtype != 0 && a.dtype != 1)
      throw std::invalid_argument("checkpoint dtype must be 0 (f32) or 1 (f64)");
    if (a.dims.empty() || a.dims.size() > 255)
      throw std::invalid_argument("checkpoint array rank invalid");
    size_t count = 1;
    for (uint32_t d : a.dims) count *= d;
    if (count != a.data.size())
      throw std::invalid_argument("checkpoint dims do not match data size for " +
                                  a.name);
    put_u16(buf, static_cast<uint16_t>(a.name.size()));
    buf += a.name;
    buf.push_back(static_cast<char>(a.dtype));
    buf.push_back(static_cast<char>(a.dims.size()));
    for (uint32_t d : a.dims) put_u32(buf, d);
    if (a.dtype == 0) {
      for (double x : a.data) {
        float fv = static_cast<float>(x);
        uint32_t bits;
        std::memcpy(&bits, &fv, 4);
        put_u32(buf, bits);
      }
    } else {
      for (double x : a.data) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        put_u64(buf, bits);
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedArray> load(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "ROMA", 4) != 0)
    throw std::runtime_error(path + ": bad magic, not a checkpoint");
  uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  uint32_t count = r.u32();
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    uint16_t name_len = r.u16();
    a.name.resize(name_len);
    r.bytes(a.name.data(), name_len);
    unsigned char dtype, rank;
    r.bytes(&dtype, 1);
    r.bytes(&rank, 1);
    if (dtype > 1)
      throw std::runtime_error(path + ": bad dtype tag for " + a.name);
    a.dtype = dtype;
    a.dims.resize(rank);
    size_t count_elems = 1;
    for (int d = 0; d < rank; ++d) {
      a.dims[d] = r.u32();
      count_elems *= a.dims[d];
    }
    a.data.resize(count_elems);
    if (a.dtype == 0) {
      for (size_t e = 0; e < count_elems; ++e) {
        uint32_t bits = r.u32();
        float fv;
        std::memcpy(&fv, &bits, 4);
        a.data[e] = static_cast<double>(fv);
      }
    } else {
      for (size_t e = 0; e < count_elems; ++e) {
        uint64_t bits = r.u64();
        double dv;
        std::memcpy(&dv, &bits, 8);
        a.data[e] = dv;
      }
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

std::vector<NamedArray> encoder_to_arrays(Encoder& enc) {
  std::vector<NamedArray> out;
  auto push_meta = [&out](const std::string& name, std::vector<double> vals) {
    NamedArray a;
    a.name = name;
    a.dtype = 1;
    a.dims = {static_cast<uint32_t>(vals.size())};
    a.data = std::move(vals);
    out.push_back(std::move(a));
  };
  const EncoderConfig& c = enc.config();
  push_meta("meta.input_dim", {static_cast<double>(enc.input_dim())});
  push_meta("meta.backbone_widths",
            std::vector<double>(c.backbone_widths.begin(),
                                c.backbone_widths.end()));
  push_meta("meta.projector_dim", {static_cast<double>(c.projector_dim)});
  push_meta("meta.predictor", {c.predictor ? 1.0 : 0.0});
  push_meta("meta.leaky_slope", {c.leaky_slope});
  for (auto& [name, t] : enc.named_parameters()) {
    NamedArray a;
    a.name = name;
    a.dtype = 1;
    a.dims = {static_cast<uint32_t>(t->rows()),
              static_cast<uint32_t>(t->cols())};
    a.data = t->values();
    out.push_back(std::move(a));
  }
  for (auto& [name, s] : enc.named_stats()) {
    NamedArray mean;
    mean.name = name + ".running_mean";
    mean.dtype = 1;
    mean.dims = {static_cast<uint32_t>(s->dim())};
    mean.data = s->mean;
    out.push_back(std::move(mean));
    NamedArray var;
    var.name = name + ".running_var";
    var.dtype = 1;
    var.dims = {static_cast<uint32_t>(s->dim())};
    var.data = s->var;
    out.push_back(std::move(var));
  }
  return out;
}

Encoder encoder_from_arrays(const std::vector<NamedArray>& arrays) {
  auto find = [&arrays](const std::string& name) -> const NamedArray& {
    for (const NamedArray& a : arrays)
      if (a.name == name) return a;
    throw std::runtime_error("checkpoint missing array " + name);
  };
  EncoderConfig cfg;
  const NamedArray& widths = find("meta.backbone_widths");
  cfg.backbone_widths.clear();
  for (double w : widths.data)
    cfg.backbone_widths.push_back(static_cast<int>(w));
  cfg.projector_dim = static_cast<int>(find("meta.projector_dim").data.at(0));
  cfg.predictor = find("meta.predictor").data.at(0) != 0.0;
  cfg.leaky_slope = find("meta.leaky_slope").data.at(0);
  const int input_dim = static_cast<int>(find("meta.input_dim").data.at(0));

  Encoder enc = Encoder::init(cfg, input_dim, /*seed=*/0);
  for (auto& [name, t] : enc.named_parameters()) {
    const NamedArray& a = find(name);
    if (a.dims.size() != 2 ||
        a.dims[0] != static_cast<uint32_t>(t->rows()) ||
        a.dims[1] != static_cast<uint32_t>(t->cols()))
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    t->values() = a.data;
  }
  for (auto& [name, s] : enc.named_stats()) {
    const NamedArray& mean = find(name + ".running_mean");
    const NamedArray& var = find(name + ".running_var");
    if (mean.data.size() != s->mean.size() ||
        var.data.size() != s->var.size())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    s->mean = mean.data;
    s->var = var.data;
  }
  return enc;
}

void save_encoder(const std::string& path, Encoder& enc) {
  save(path, encoder_to_arrays(enc));
}

Encoder load_encoder(const std::string& path) {
  return encoder_from_arrays(load(path));
}

}  // namespace checkpoint

}  // namespace roma
