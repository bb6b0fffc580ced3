#include "roma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "roma/rng.hpp"
#include "roma/trainer.hpp"

namespace roma {

void ProbeConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("eval.probe_epochs must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("eval.probe_batch_size must be >= 1");
  if (base_lr <= 0.0) throw std::invalid_argument("eval.probe_lr must be > 0");
  if (weight_decay < 0.0)
    throw std::invalid_argument("eval.probe_weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("eval.probe_momentum must be in [0,1)");
}

std::string EvalReport::to_kv() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "probe_top1=%.17g\nknn_top1=%.17g\nemb_std=%.17g\n"
                "mean_offdiag_cos=%.17g\nconfig=%s\n",
                probe_top1, knn_top1, emb_std, mean_offdiag_cos,
                config_echo.c_str());
  return buf;
}

std::string EvalReport::csv_header() {
  return "probe_top1,knn_top1,emb_std,mean_offdiag_cos";
}

std::string EvalReport::to_csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", probe_top1,
                knn_top1, emb_std, mean_offdiag_cos);
  return buf;
}

namespace eval {

namespace {

// Rows scaled to unit norm; all-zero rows are left as zeros.
Tensor normalized_rows(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double n2 = 0.0;
    for (int j = 0; j < x.cols(); ++j) n2 += x.at(i, j) * x.at(i, j);
    double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
    for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) * inv;
  }
  return out;
}

void check_labels(const std::vector<int>& y, int k, const char* who) {
  for (int v : y)
    if (v < 0 || v >= k)
      throw std::invalid_argument(std::string(who) +
                                  ": label outside [0, k_classes)");
}

int argmax_tie_smallest(const std::vector<double>& scores) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(scores.size()); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

}  // namespace

CollapseStats collapse_diagnostics(const Tensor& embeddings) {
  const int n = embeddings.rows(), d = embeddings.cols();
  if (n < 2)
    throw std::invalid_argument("collapse_diagnostics: need at least 2 rows");
  Tensor z = normalized_rows(embeddings);

  CollapseStats out;
  // mean per-dimension sample standard deviation
  double std_sum = 0.0;
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += z.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      double dev = z.at(i, j) - mean;
      var += dev * dev;
    }
    std_sum += std::sqrt(var / (n - 1));
  }
  out.emb_std = std_sum / d;

  // Gram identity: sum over distinct pairs of z_i . z_j equals
  // (|sum_i z_i|^2 - sum_i |z_i|^2); the mean divides by n(n-1).
  double sum_sq = 0.0, self_sq = 0.0;
  for (int j = 0; j < d; ++j) {
    double col = 0.0;
    for (int i = 0; i < n; ++i) col += z.at(i, j);
    sum_sq += col * col;
  }
  for (int i = 0; i < n; ++i) {
    double r = 0.0;
    for (int j = 0; j < d; ++j) r += z.at(i, j) * z.at(i, j);
    self_sq += r;
  }
  out.mean_offdiag_cos = (sum_sq - self_sq) /
                         (static_cast<double>(n) * (n - 1));
  return out;
}

Tensor backbone_features_eval(Encoder& enc, const Dataset& ds) {
  if (ds.size() < 1)
    throw std::invalid_argument("backbone_features_eval: empty dataset");
  Graph g;
  Tensor f = enc.backbone_features(g, ds.samples, /*training=*/false);
  return f.detach();
}

double linear_probe_features(const Tensor& train_x,
                             const std::vector<int>& train_y,
                             const Tensor& test_x,
                             const std::vector<int>& test_y, int k_classes,
                             const ProbeConfig& cfg) {
  cfg.validate();
  if (k_classes < 2)
    throw std::invalid_argument("linear_probe: k_classes must be >= 2");
  const int n = train_x.rows(), f = train_x.cols();
  if (n < 1 || test_x.rows() < 1)
    throw std::invalid_argument("linear_probe: empty feature matrix");
  if (test_x.cols() != f)
    throw std::invalid_argument("linear_probe: feature width mismatch");
  if (static_cast<int>(train_y.size()) != n ||
      static_cast<int>(test_y.size()) != test_x.rows())
    throw std::invalid_argument("linear_probe: label count mismatch");
  check_labels(train_y, k_classes, "linear_probe");
  check_labels(test_y, k_classes, "linear_probe");
  std::vector<int> present(k_classes, 0);
  for (int v : train_y) present[v] = 1;
  for (int c = 0; c < k_classes; ++c)
    if (!present[c])
      throw std::invalid_argument(
          "linear_probe: class " + std::to_string(c) +
          " absent from the probe training set");

  Tensor W(f, k_classes, /*requires_grad=*/true);
  Tensor b(1, k_classes, /*requires_grad=*/true);
  std::vector<Tensor*> params = {&W, &b};
  std::vector<bool> decay = {true, false};
  SgdState opt;
  trainer::sgd_init(opt, params);

  const int B = std::min(cfg.batch_size, n);
  const int batches = (n + B - 1) / B;  // no batch statistics: any size works
  const long long total_steps =
      std::max<long long>(1, static_cast<long long>(cfg.epochs) * batches);
  const double eff = cfg.effective_lr();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  long long gstep = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "probe_shuffle",
                                static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (int bi = 0; bi < batches; ++bi) {
      const int lo = bi * B;
      const int m = std::min(n, lo + B) - lo;
      Tensor xb(m, f);
      std::vector<int> yb(m);
      for (int r = 0; r < m; ++r) {
        yb[r] = train_y[order[lo + r]];
        for (int j = 0; j < f; ++j) xb.at(r, j) = train_x.at(order[lo + r], j);
      }
      Graph g;
      Tensor logits = g.add_rowvec(g.matmul(xb, W), b);
      Tensor nll = g.sub(g.row_logsumexp(logits), g.gather_elems(logits, yb));
      Tensor loss = g.mean(nll);
      if (!std::isfinite(loss.at(0, 0)))
        throw std::runtime_error("linear_probe: loss diverged");
      g.backward(loss);
      trainer::sgd_step(params, decay, opt,
                        trainer::lr_at(gstep, total_steps, eff), cfg.momentum,
                        cfg.weight_decay);
      ++gstep;
    }
  }

  // test top-1; prediction ties resolve to the smaller class id
  int correct = 0;
  for (int i = 0; i < test_x.rows(); ++i) {
    std::vector<double> scores(k_classes);
    for (int c = 0; c < k_classes; ++c) {
      double s = b.at(0, c);
      for (int j = 0; j < f; ++j) s += test_x.at(i, j) * W.at(j, c);
      scores[c] = s;
    }
    if (argmax_tie_smallest(scores) == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / test_x.rows();
}

double linear_probe(Encoder& enc, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg) {
  if (train.num_classes < 2)
    throw std::invalid_argument("linear_probe: dataset needs >= 2 classes");
  Tensor train_f = backbone_features_eval(enc, train);
  Tensor test_f = backbone_features_eval(enc, test);
  return linear_probe_features(train_f, train.labels, test_f, test.labels,
                               train.num_classes, cfg);
}

std::vector<int> knn_predictions(Encoder& enc, const Dataset& train,
                                 const Dataset& test, int k) {
  if (k < 1) throw std::invalid_argument("knn_eval: k must be >= 1");
  if (k > train.size())
    throw std::invalid_argument("knn_eval: k exceeds the train set size");
  if (train.num_classes < 2)
    throw std::invalid_argument("knn_eval: dataset needs >= 2 classes");
  check_labels(train.labels, train.num_classes, "knn_eval");

  Tensor train_f = normalized_rows(backbone_features_eval(enc, train));
  Tensor test_f = normalized_rows(backbone_features_eval(enc, test));
  const int n = train_f.rows(), d = train_f.cols();

  std::vector<int> pred(test_f.rows());
  std::vector<int> idx(n);
  for (int i = 0; i < test_f.rows(); ++i) {
    std::vector<double> sims(n);
    for (int t = 0; t < n; ++t) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += test_f.at(i, j) * train_f.at(t, j);
      sims[t] = s;
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&sims](int a, int b) {
                        if (sims[a] != sims[b]) return sims[a] > sims[b];
                        return a < b;  // equal similarity: smaller index
                      });
    std::vector<double> votes(train.num_classes, 0.0);
    for (int r = 0; r < k; ++r) votes[train.labels[idx[r]]] += 1.0;
    pred[i] = argmax_tie_smallest(votes);
  }
  return pred;
}

double knn_eval(Encoder& enc, const Dataset& train, const Dataset& test,
                int k) {
  std::vector<int> pred = knn_predictions(enc, train, test, k);
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.labels[i]) ++correct;
  return static_cast<double>(correct) / pred.size();
}

void export_embeddings(Encoder& enc, const Dataset& ds,
                       const std::string& path) {
  Tensor f = backbone_features_eval(enc, ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id,label";
  for (int j = 0; j < f.cols(); ++j) out << ",f" << j;
  out << "\n";
  char num[64];
  for (int i = 0; i < f.rows(); ++i) {
    out << i << "," << (ds.labels.empty() ? 0 : ds.labels[i]);
    for (int j = 0; j < f.cols(); ++j) {
      std::snprintf(num, sizeof num, ",%.17g", f.at(i, j));
      out << num;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

EvalReport evaluate(Encoder& enc, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg, int knn_k) {
  EvalReport rep;
  rep.probe_top1 = linear_probe(enc, train, test, cfg);
  rep.knn_top1 = knn_eval(enc, train, test, knn_k);
  CollapseStats cs = collapse_diagnostics(backbone_features_eval(enc, test));
  rep.emb_std = cs.emb_std;
  rep.mean_offdiag_cos = cs.mean_offdiag_cos;
  char echo[160];
  std::snprintf(echo, sizeof echo,
                "k_classes=%d n_train=%d n_test=%d probe_epochs=%d knn_k=%d",
                train.num_classes, train.size(), test.size(), cfg.epochs,
                knn_k);
  rep.config_echo = echo;
  return rep;
}

}  // namespace eval

}  // namespace roma
