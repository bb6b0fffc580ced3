#include "roma/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace roma {

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument(std::string(name) + " must be in [0,1]");
  };
  prob(mask_prob, "augment.mask_prob");
  prob(flip_prob, "augment.flip_prob");
  prob(grayscale_prob, "augment.grayscale_prob");
  prob(blur_prob, "augment.blur_prob");
  prob(solarize_prob, "augment.solarize_prob");
  if (noise_sigma < 0.0)
    throw std::invalid_argument("augment.noise_sigma must be >= 0");
  if (scale_lo > scale_hi || crop_scale_lo > crop_scale_hi)
    throw std::invalid_argument("augment scale ranges must have lo <= hi");
  if (crop_scale_lo <= 0.0 || crop_scale_hi > 1.0)
    throw std::invalid_argument("augment.crop_scale must lie in (0,1]");
  if (brightness < 0.0 || contrast < 0.0)
    throw std::invalid_argument("augment jitter strengths must be >= 0");
}

namespace data {

namespace {

constexpr int kImageSide = 32;
constexpr int kImagePlane = kImageSide * kImageSide;
constexpr int kImageDim = 3 * kImagePlane;
constexpr double kMinMeanAngleCos = 0.7071067811865476;  // cos(45 deg)

std::vector<double> augment_vector(const std::vector<double>& x,
                                   const AugmentConfig& cfg, Rng& rng) {
  std::vector<double> v = x;
  double s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  for (double& e : v) e *= s;
  if (cfg.noise_sigma > 0.0)
    for (double& e : v) e += cfg.noise_sigma * rng.normal();
  if (cfg.mask_prob > 0.0)
    for (double& e : v)
      if (rng.bernoulli(cfg.mask_prob)) e = 0.0;
  return v;
}

std::vector<double> augment_image(const std::vector<double>& x,
                                  const AugmentConfig& cfg, Rng& rng) {
  if (static_cast<int>(x.size()) != kImageDim)
    throw std::invalid_argument("image augmentation expects 32x32x3 samples");
  std::vector<double> v(kImageDim);

  // random crop + nearest-neighbor resize back to 32x32
  double area = rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);
  int side = std::clamp(
      static_cast<int>(std::lround(kImageSide * std::sqrt(area))), 1,
      kImageSide);
  int x0 = static_cast<int>(rng.below(kImageSide - side + 1));
  int y0 = static_cast<int>(rng.below(kImageSide - side + 1));
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < kImageSide; ++r)
      for (int col = 0; col < kImageSide; ++col) {
        int sr = y0 + r * side / kImageSide;
        int sc = x0 + col * side / kImageSide;
        v[c * kImagePlane + r * kImageSide + col] =
            x[c * kImagePlane + sr * kImageSide + sc];
      }

  if (cfg.flip_prob > 0.0 && rng.bernoulli(cfg.flip_prob)) {
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < kImageSide; ++r)
        for (int col = 0; col < kImageSide / 2; ++col)
          std::swap(v[c * kImagePlane + r * kImageSide + col],
                    v[c * kImagePlane + r * kImageSide + kImageSide - 1 - col]);
  }

  if (cfg.brightness > 0.0) {
    double delta = rng.uniform(-cfg.brightness, cfg.brightness);
    for (double& e : v) e += delta;
  }
  if (cfg.contrast > 0.0) {
    double factor = 1.0 + rng.uniform(-cfg.contrast, cfg.contrast);
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= v.size();
    for (double& e : v) e = (e - mean) * factor + mean;
  }
  if (cfg.brightness > 0.0 || cfg.contrast > 0.0)
    for (double& e : v) e = std::clamp(e, 0.0, 1.0);
  if (cfg.grayscale_prob > 0.0 && rng.bernoulli(cfg.grayscale_prob)) {
    for (int p = 0; p < kImagePlane; ++p) {
      double y = 0.299 * v[p] + 0.587 * v[kImagePlane + p] +
                 0.114 * v[2 * kImagePlane + p];
      v[p] = v[kImagePlane + p] = v[2 * kImagePlane + p] = y;
    }
  }
  if (cfg.blur_prob > 0.0 && rng.bernoulli(cfg.blur_prob)) {
    // 3x3 Gaussian kernel (1 2 1 / 2 4 2 / 1 2 1), weights renormalized over
    // the in-bounds taps at image borders.
    static constexpr double kW[3] = {1.0, 2.0, 1.0};
    std::vector<double> src = v;
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < kImageSide; ++r)
        for (int col = 0; col < kImageSide; ++col) {
          double acc = 0.0, wsum = 0.0;
          for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
              int rr = r + dr, cc = col + dc;
              if (rr < 0 || rr >= kImageSide || cc < 0 || cc >= kImageSide)
                continue;
              double w = kW[dr + 1] * kW[dc + 1];
              acc += w * src[c * kImagePlane + rr * kImageSide + cc];
              wsum += w;
            }
          v[c * kImagePlane + r * kImageSide + col] = acc / wsum;
        }
  }
  if (cfg.solarize_prob > 0.0 && rng.bernoulli(cfg.solarize_prob)) {
    for (double& e : v)
      if (e > 0.5) e = 1.0 - e;
  }
  return v;
}

std::vector<double> tensor_row(const Tensor& t, int i) {
  std::vector<double> out(t.cols());
  for (int j = 0; j < t.cols(); ++j) out[j] = t.at(i, j);
  return out;
}

void set_row(Tensor& t, int i, const std::vector<double>& v) {
  for (int j = 0; j < t.cols(); ++j) t.at(i, j) = v[j];
}

// Sattolo's algorithm: a uniformly random cyclic permutation, which by
// construction has no fixed point.
std::vector<int> cyclic_derangement(int n, Rng& rng) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(i)));
    std::swap(p[i], p[j]);
  }
  return p;
}

void write_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& f) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

Dataset gen_synthetic(int k_classes, int per_class, int dim, double spread,
                      uint64_t seed) {
  if (k_classes < 2) throw std::invalid_argument("gen_synthetic: k_classes must be >= 2");
  if (per_class < 1) throw std::invalid_argument("gen_synthetic: per_class must be >= 1");
  if (dim < 2) throw std::invalid_argument("gen_synthetic: dim must be >= 2");
  if (spread < 0.0) throw std::invalid_argument("gen_synthetic: spread must be >= 0");

  Rng mean_rng(derive_seed(seed, "means"));
  std::vector<std::vector<double>> means;
  const int kMaxAttempts = 100000;
  int attempts = 0;
  while (static_cast<int>(means.size()) < k_classes) {
    if (++attempts > kMaxAttempts)
      throw std::runtime_error(
          "gen_synthetic: cannot place " + std::to_string(k_classes) +
          " means with 45-degree separation in dimension " +
          std::to_string(dim));
    std::vector<double> m(dim);
    double norm = 0.0;
    for (double& x : m) {
      x = mean_rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (double& x : m) x /= norm;
    bool ok = true;
    for (const auto& other : means) {
      double dot = 0.0;
      for (int j = 0; j < dim; ++j) dot += m[j] * other[j];
      if (dot > kMinMeanAngleCos) {
        ok = false;
        break;
      }
    }
    if (ok) means.push_back(std::move(m));
  }

  Rng noise_rng(derive_seed(seed, "noise"));
  int n = k_classes * per_class;
  Dataset ds;
  ds.samples = Tensor(n, dim);
  ds.labels.resize(n);
  ds.num_classes = k_classes;
  ds.source = "synthetic";
  int row = 0;
  for (int c = 0; c < k_classes; ++c)
    for (int s = 0; s < per_class; ++s, ++row) {
      ds.labels[row] = c;
      for (int j = 0; j < dim; ++j)
        ds.samples.at(row, j) = means[c][j] + spread * noise_rng.normal();
    }
  return ds;
}

std::pair<Dataset, Dataset> split_stratified(const Dataset& ds,
                                             double train_fraction,
                                             uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("split: train_fraction must be in (0,1)");
  if (ds.size() < 2) throw std::invalid_argument("split: dataset too small");
  if (ds.num_classes < 1 || static_cast<int>(ds.labels.size()) != ds.size())
    throw std::invalid_argument("split: dataset labels missing");

  std::vector<std::vector<int>> by_class(ds.num_classes);
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes)
      throw std::invalid_argument("split: label outside [0, num_classes)");
    by_class[ds.labels[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, "split"));
  std::vector<int> train_rows, test_rows;
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    if (rows.size() < 2)
      throw std::invalid_argument(
          "split: every class needs >= 2 samples to appear on both sides");
    rng.shuffle(rows);
    int n_train = static_cast<int>(rows.size() * train_fraction);
    n_train = std::clamp(n_train, 1, static_cast<int>(rows.size()) - 1);
    for (size_t i = 0; i < rows.size(); ++i)
      (static_cast<int>(i) < n_train ? train_rows : test_rows)
          .push_back(rows[i]);
  }

  auto take = [&ds](const std::vector<int>& rows) {
    Dataset out;
    out.samples = Tensor(static_cast<int>(rows.size()), ds.dim());
    out.labels.resize(rows.size());
    out.num_classes = ds.num_classes;
    out.source = ds.source;
    for (size_t i = 0; i < rows.size(); ++i) {
      out.labels[i] = ds.labels[rows[i]];
      for (int j = 0; j < ds.dim(); ++j)
        out.samples.at(static_cast<int>(i), j) = ds.samples.at(rows[i], j);
    }
    return out;
  };
  return {take(train_rows), take(test_rows)};
}

Dataset load_cifar_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.seekg(0, std::ios::end);
  std::streamoff len = f.tellg();
  f.seekg(0);
  constexpr std::streamoff kRecord = 3073;
  if (len <= 0 || len % kRecord != 0)
    throw std::runtime_error(path + ": length " + std::to_string(len) +
                             " is not a multiple of 3073");
  int n = static_cast<int>(len / kRecord);
  Dataset ds;
  ds.samples = Tensor(n, kImageDim);
  ds.labels.resize(n);
  ds.num_classes = 10;
  ds.source = "cifar_binary";
  std::vector<unsigned char> rec(kRecord);
  for (int i = 0; i < n; ++i) {
    if (!f.read(reinterpret_cast<char*>(rec.data()), kRecord))
      throw std::runtime_error(path + ": unexpected end of file");
    if (rec[0] > 9)
      throw std::runtime_error(path + ": record " + std::to_string(i) +
                               " has label byte " + std::to_string(rec[0]));
    ds.labels[i] = rec[0];
    for (int j = 0; j < kImageDim; ++j)
      ds.samples.at(i, j) = rec[1 + j] / 255.0;
  }
  return ds;
}

void save_cifar_binary(const Dataset& ds, const std::string& path) {
  if (ds.dim() != kImageDim)
    throw std::invalid_argument("save_cifar_binary: samples must be 3072-wide");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  std::vector<unsigned char> rec(3073);
  for (int i = 0; i < ds.size(); ++i) {
    int label = ds.labels.empty() ? 0 : ds.labels[i];
    if (label < 0 || label > 9)
      throw std::invalid_argument("save_cifar_binary: label out of range");
    rec[0] = static_cast<unsigned char>(label);
    for (int j = 0; j < kImageDim; ++j) {
      double v = std::clamp(ds.samples.at(i, j), 0.0, 1.0);
      rec[1 + j] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

Dataset load_rmds(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "RMDS", 4) != 0)
    throw std::runtime_error(path + ": bad magic, not an RMDS file");
  uint32_t version = read_u32(f);
  if (version != 1)
    throw std::runtime_error(path + ": unsupported RMDS version " +
                             std::to_string(version));
  uint32_t n = read_u32(f), d = read_u32(f), k = read_u32(f);
  if (n == 0 || d == 0) throw std::runtime_error(path + ": empty dataset");
  Dataset ds;
  ds.samples = Tensor(static_cast<int>(n), static_cast<int>(d));
  ds.labels.resize(n);
  ds.num_classes = static_cast<int>(k);
  ds.source = "synthetic";
  std::vector<unsigned char> buf(static_cast<size_t>(n) * d * 4);
  if (!f.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw std::runtime_error(path + ": truncated sample block");
  for (size_t i = 0; i < static_cast<size_t>(n) * d; ++i) {
    uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                    (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                    (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                    (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
    float fv;
    std::memcpy(&fv, &bits, 4);
    ds.samples.values()[i] = static_cast<double>(fv);
  }
  std::vector<unsigned char> lab(n);
  if (!f.read(reinterpret_cast<char*>(lab.data()), lab.size()))
    throw std::runtime_error(path + ": truncated label block");
  for (uint32_t i = 0; i < n; ++i) ds.labels[i] = lab[i];
  return ds;
}

void save_rmds(const Dataset& ds, const std::string& path) {
  if (ds.size() < 1) throw std::invalid_argument("save_rmds: empty dataset");
  if (ds.num_classes > 255)
    throw std::invalid_argument("save_rmds: labels must fit in a byte");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write("RMDS", 4);
  write_u32(f, 1);
  write_u32(f, static_cast<uint32_t>(ds.size()));
  write_u32(f, static_cast<uint32_t>(ds.dim()));
  write_u32(f, static_cast<uint32_t>(ds.num_classes));
  for (double v : ds.samples.values()) {
    float fv = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &fv, 4);
    unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                          static_cast<unsigned char>((bits >> 8) & 0xff),
                          static_cast<unsigned char>((bits >> 16) & 0xff),
                          static_cast<unsigned char>((bits >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
  }
  for (int i = 0; i < ds.size(); ++i) {
    unsigned char b = static_cast<unsigned char>(
        ds.labels.empty() ? 0 : ds.labels[i]);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> augment_view(const std::vector<double>& sample,
                                 const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  return cfg.image_mode ? augment_image(sample, cfg, rng)
                        : augment_vector(sample, cfg, rng);
}

std::pair<std::vector<double>, std::vector<double>> augment_pair(
    const std::vector<double>& sample, const AugmentConfig& cfg, Rng& rng) {
  auto a = augment_view(sample, cfg, rng);
  auto b = augment_view(sample, cfg, rng);
  return {std::move(a), std::move(b)};
}

TripletViews make_triplets(const Tensor& sources, const AugmentConfig& cfg,
                           uint64_t stream_seed) {
  int B = sources.rows();
  if (B < 2)
    throw std::invalid_argument("make_triplets: needs at least 2 sources");
  cfg.validate();
  TripletViews out;
  out.anchors = Tensor(B, sources.cols());
  out.positives = Tensor(B, sources.cols());
  out.negatives = Tensor(B, sources.cols());

  Rng derange_rng(derive_seed(stream_seed, "derange"));
  out.negative_source = cyclic_derangement(B, derange_rng);

  for (int i = 0; i < B; ++i) {
    Rng rng(derive_seed(stream_seed, "aug", static_cast<uint64_t>(i)));
    auto [a, b] = augment_pair(tensor_row(sources, i), cfg, rng);
    set_row(out.anchors, i, a);
    set_row(out.positives, i, b);
    Rng nrng(derive_seed(stream_seed, "neg", static_cast<uint64_t>(i)));
    set_row(out.negatives, i,
            augment_view(tensor_row(sources, out.negative_source[i]), cfg, nrng));
  }
  return out;
}

PairViews make_view_pairs(const Tensor& sources, const AugmentConfig& cfg,
                          uint64_t stream_seed) {
  int B = sources.rows();
  if (B < 1) throw std::invalid_argument("make_view_pairs: empty batch");
  cfg.validate();
  PairViews out;
  out.a = Tensor(B, sources.cols());
  out.b = Tensor(B, sources.cols());
  for (int i = 0; i < B; ++i) {
    Rng rng(derive_seed(stream_seed, "aug", static_cast<uint64_t>(i)));
    auto [a, b] = augment_pair(tensor_row(sources, i), cfg, rng);
    set_row(out.a, i, a);
    set_row(out.b, i, b);
  }
  return out;
}

}  // namespace data

}  // namespace roma
