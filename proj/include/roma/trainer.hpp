#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "roma/data.hpp"
#include "roma/encoder.hpp"
#include "roma/losses.hpp"
#include "roma/rngmap.hpp"
#include "roma/tensor.hpp"

namespace roma {

// Thrown when the training loss turns non-finite. The message carries the
// diagnostic record (epoch, step, lr); the partial metrics log is flushed
// before the throw when an output directory was given.
class NanAbortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RandomMapConfig {
  MapDistribution distribution = MapDistribution::normal;
  // Output dimension of L (rows). 0 selects the default: half the embedding
  // dimension, the d -> d/2 shrinking mapping.
  int dim = 0;
  bool scale_entries = true;  // entries scaled by 1/sqrt(d_out)
  bool renormalize = true;    // l2-normalize projected rows
  RegenSchedule schedule;     // regeneration frequency (default: per epoch)
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double base_lr = 0.05;
  double weight_decay = 1e-4;
  double momentum = 0.9;

  LossKind loss = LossKind::triplet_ce;
  LossParams loss_params;
  // Also evaluate the mirrored triplet (anchor and positive swapped) and
  // average the two losses. Triplet loss only; the other losses are already
  // role-symmetric.
  bool symmetrize = false;

  RandomMapConfig map;
  EncoderConfig encoder;
  AugmentConfig augment;

  uint64_t seed = 1;
  Precision precision = Precision::f64;
  // Extra checkpoint every K epochs (0: only at the end of training).
  int checkpoint_every = 0;

  // Linear scaling rule: lr = base_lr * batch_size / 256.
  double effective_lr() const { return base_lr * batch_size / 256.0; }
  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;                // 1-based
  long long step = 0;           // optimizer steps completed by end of epoch
  double loss = 0.0;            // mean batch loss over the epoch
  double lr = 0.0;              // lr used on the epoch's last step
  double emb_std = 0.0;         // mean over the epoch's batches
  double mean_offdiag_cos = 0.0;
  long long regen_count = 0;    // cumulative map regenerations
};

std::string metrics_csv_header();
std::string to_csv_row(const MetricsRecord& r);
std::string metrics_to_csv(const std::vector<MetricsRecord>& rows);

struct TrainResult {
  Encoder encoder;
  std::vector<MetricsRecord> metrics;
  long long total_steps = 0;
  long long regen_count = 0;
};

// SGD-with-momentum state; velocity buffers are aligned with the parameter
// list passed to sgd_init and zero-initialized.
struct SgdState {
  std::vector<std::vector<double>> velocity;
  long long step = 0;
};

namespace trainer {

// Cosine decay: effective_lr * 1/2 (1 + cos(pi * step / total_steps)).
double lr_at(long long step, long long total_steps, double effective_lr);

void sgd_init(SgdState& state, const std::vector<Tensor*>& params);

// Classic coupled-L2 SGD: g <- grad + wd*param (where decay[i] is set);
// v <- momentum*v + g; param <- param - lr*v. Consumes (zeroes) the
// gradients it applied.
void sgd_step(const std::vector<Tensor*>& params,
              const std::vector<bool>& decay, SgdState& state, double lr,
              double momentum, double weight_decay);

// Full optimization loop: per batch, build views/triplets, encode, project
// through the current random map (regenerated on its schedule), evaluate the
// loss, backprop, step. Emits one metrics record per epoch. When out_dir is
// non-empty, writes metrics.csv and checkpoint.bin there (plus
// checkpoint_epochNNNN.bin per checkpoint_every).
TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                  const std::string& out_dir = "");

}  // namespace trainer

// One named nd-array of a checkpoint. Data lives as doubles in memory and is
// written in `dtype` on disk (0 = f32, 1 = f64, little-endian).
struct NamedArray {
  std::string name;
  int dtype = 1;
  std::vector<uint32_t> dims;
  std::vector<double> data;
};

namespace checkpoint {

// Binary container: magic "ROMA", format version u32 LE, array count u32 LE;
// per array: name length u16 LE, name bytes, dtype byte, rank byte, dims
// u32 LE each, raw little-endian payload. save(load(f)) is byte-identical.
void save(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load(const std::string& path);

// Encoder <-> arrays: meta.* arrays describing the architecture followed by
// every named parameter and the BN running statistics.
std::vector<NamedArray> encoder_to_arrays(Encoder& enc);
Encoder encoder_from_arrays(const std::vector<NamedArray>& arrays);

void save_encoder(const std::string& path, Encoder& enc);
Encoder load_encoder(const std::string& path);

}  // namespace checkpoint

}  // namespace roma
