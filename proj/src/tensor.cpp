#include "roma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace roma {

namespace {

std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a.rows(), a.cols()) + " vs " +
                              shape_str(b.rows(), b.cols()));
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(int rows, int cols, bool requires_grad) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("Tensor: dimensions must be positive");
  impl_ = std::make_shared<Impl>();
  impl_->rows = rows;
  impl_->cols = cols;
  impl_->v.assign(static_cast<size_t>(rows) * cols, 0.0);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("Tensor: dimensions must be positive");
  if (values.size() != static_cast<size_t>(rows) * cols)
    throw std::invalid_argument("Tensor: data length " +
                                std::to_string(values.size()) +
                                " does not match shape " + shape_str(rows, cols));
  impl_ = std::make_shared<Impl>();
  impl_->rows = rows;
  impl_->cols = cols;
  impl_->v = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(1, 1, {v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> v, bool requires_grad) {
  int n = static_cast<int>(v.size());
  return Tensor(1, n, std::move(v), requires_grad);
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.impl_->v[static_cast<size_t>(i) * n + i] = 1.0;
  return t;
}

Tensor Tensor::full(int rows, int cols, double v) {
  Tensor t(rows, cols);
  t.impl_->v.assign(t.impl_->v.size(), v);
  return t;
}

int Tensor::rows() const { return impl_ ? impl_->rows : 0; }
int Tensor::cols() const { return impl_ ? impl_->cols : 0; }
int Tensor::size() const { return impl_ ? static_cast<int>(impl_->v.size()) : 0; }

double Tensor::at(int i, int j) const {
  return impl_->v[static_cast<size_t>(i) * impl_->cols + j];
}
double& Tensor::at(int i, int j) {
  return impl_->v[static_cast<size_t>(i) * impl_->cols + j];
}

double Tensor::scalar_value() const {
  if (!impl_ || impl_->v.size() != 1)
    throw std::invalid_argument("scalar_value: tensor is not 1x1");
  return impl_->v[0];
}

const std::vector<double>& Tensor::values() const { return impl_->v; }
std::vector<double>& Tensor::values() { return impl_->v; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool b) { impl_->requires_grad = b; }

const std::vector<double>& Tensor::grad() const {
  if (impl_->g.empty()) impl_->g.assign(impl_->v.size(), 0.0);
  return impl_->g;
}
std::vector<double>& Tensor::grad() {
  if (impl_->g.empty()) impl_->g.assign(impl_->v.size(), 0.0);
  return impl_->g;
}
void Tensor::zero_grad() {
  if (impl_) impl_->g.assign(impl_->v.size(), 0.0);
}

bool Tensor::all_finite() const {
  if (!impl_) return true;
  for (double x : impl_->v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor Tensor::detach() const {
  if (!impl_) return Tensor();
  return Tensor(impl_->rows, impl_->cols, impl_->v, false);
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * n;
    double* crow = c + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<size_t>(j) * n;
      double acc = 0.0;
      for (int p = 0; p < n; ++p) acc += arow[p] * brow[p];
      if (accumulate)
        crow[j] += acc;
      else
        crow[j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(k) * n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Graph

bool Graph::tracked(const Tensor& t) const {
  return t.impl_ && (t.impl_->requires_grad ||
                     (t.impl_->graph == this && t.impl_->node >= 0));
}

void Graph::check_same_graph(const Tensor& t, const char* op) const {
  if (t.impl_ && t.impl_->graph != nullptr && t.impl_->graph != this)
    throw std::logic_error(std::string(op) +
                           ": input tensor belongs to a different graph");
}

void Graph::round_if_f32(std::vector<double>& v) const {
  if (precision_ == Precision::f32)
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

Tensor Graph::make_out(int rows, int cols, Op op,
                       std::vector<std::shared_ptr<Tensor::Impl>> ins,
                       std::vector<double> values, std::vector<double> saved,
                       std::vector<int> idx, double c0, double c1) {
  round_if_f32(values);
  Tensor out(rows, cols, std::move(values), false);
  bool track = false;
  for (const auto& in : ins)
    if (in->requires_grad || (in->graph == this && in->node >= 0)) track = true;
  if (track) {
    out.impl_->graph = this;
    out.impl_->node = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{op, std::move(ins), out.impl_, std::move(saved),
                          std::move(idx), c0, c1});
  }
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  check_same_graph(a, "add");
  check_same_graph(b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_error("add", a, b);
  std::vector<double> v(a.values());
  for (int i = 0; i < a.size(); ++i) v[i] += b.values()[i];
  return make_out(a.rows(), a.cols(), Op::Add, {a.impl_, b.impl_}, std::move(v));
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  check_same_graph(a, "sub");
  check_same_graph(b, "sub");
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_error("sub", a, b);
  std::vector<double> v(a.values());
  for (int i = 0; i < a.size(); ++i) v[i] -= b.values()[i];
  return make_out(a.rows(), a.cols(), Op::Sub, {a.impl_, b.impl_}, std::move(v));
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  check_same_graph(a, "mul");
  check_same_graph(b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_error("mul", a, b);
  std::vector<double> v(a.values());
  for (int i = 0; i < a.size(); ++i) v[i] *= b.values()[i];
  return make_out(a.rows(), a.cols(), Op::Mul, {a.impl_, b.impl_}, std::move(v));
}

Tensor Graph::scale(const Tensor& a, double c) {
  check_same_graph(a, "scale");
  std::vector<double> v(a.values());
  for (double& x : v) x *= c;
  return make_out(a.rows(), a.cols(), Op::Scale, {a.impl_}, std::move(v), {}, {}, c);
}

Tensor Graph::add_scalar(const Tensor& a, double c) {
  check_same_graph(a, "add_scalar");
  std::vector<double> v(a.values());
  for (double& x : v) x += c;
  return make_out(a.rows(), a.cols(), Op::AddScalar, {a.impl_}, std::move(v));
}

Tensor Graph::exp(const Tensor& a) {
  check_same_graph(a, "exp");
  std::vector<double> v(a.values());
  for (double& x : v) x = std::exp(x);
  return make_out(a.rows(), a.cols(), Op::Exp, {a.impl_}, std::move(v));
}

Tensor Graph::log(const Tensor& a) {
  check_same_graph(a, "log");
  std::vector<double> v(a.values());
  for (double& x : v) x = std::log(x);
  return make_out(a.rows(), a.cols(), Op::Log, {a.impl_}, std::move(v));
}

Tensor Graph::relu(const Tensor& a) {
  check_same_graph(a, "relu");
  std::vector<double> v(a.values());
  for (double& x : v) x = x > 0.0 ? x : 0.0;
  return make_out(a.rows(), a.cols(), Op::Relu, {a.impl_}, std::move(v));
}

Tensor Graph::leaky_relu(const Tensor& a, double slope) {
  check_same_graph(a, "leaky_relu");
  std::vector<double> v(a.values());
  for (double& x : v)
    if (x < 0.0) x *= slope;
  return make_out(a.rows(), a.cols(), Op::LeakyRelu, {a.impl_}, std::move(v), {},
                  {}, slope);
}

Tensor Graph::softplus(const Tensor& a) {
  check_same_graph(a, "softplus");
  std::vector<double> v(a.values());
  for (double& x : v) x = stable_softplus(x);
  return make_out(a.rows(), a.cols(), Op::Softplus, {a.impl_}, std::move(v));
}

Tensor Graph::add_rowvec(const Tensor& a, const Tensor& r) {
  check_same_graph(a, "add_rowvec");
  check_same_graph(r, "add_rowvec");
  if (r.rows() != 1 || r.cols() != a.cols()) dim_error("add_rowvec", a, r);
  std::vector<double> v(a.values());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) v[static_cast<size_t>(i) * a.cols() + j] += r.values()[j];
  return make_out(a.rows(), a.cols(), Op::AddRowVec, {a.impl_, r.impl_}, std::move(v));
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  check_same_graph(a, "matmul");
  check_same_graph(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions mismatch " +
                                shape_str(a.rows(), a.cols()) + " * " +
                                shape_str(b.rows(), b.cols()));
  std::vector<double> v(static_cast<size_t>(a.rows()) * b.cols());
  kernels::matmul_nn(a.values().data(), b.values().data(), v.data(), a.rows(),
                     a.cols(), b.cols(), false);
  return make_out(a.rows(), b.cols(), Op::MatMul, {a.impl_, b.impl_}, std::move(v));
}

Tensor Graph::transpose(const Tensor& a) {
  check_same_graph(a, "transpose");
  std::vector<double> v(a.values().size());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      v[static_cast<size_t>(j) * a.rows() + i] = a.values()[static_cast<size_t>(i) * a.cols() + j];
  return make_out(a.cols(), a.rows(), Op::Transpose, {a.impl_}, std::move(v));
}

Tensor Graph::sum(const Tensor& a) {
  check_same_graph(a, "sum");
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_out(1, 1, Op::Sum, {a.impl_}, {s});
}

Tensor Graph::mean(const Tensor& a) {
  check_same_graph(a, "mean");
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_out(1, 1, Op::Mean, {a.impl_}, {s / a.size()});
}

Tensor Graph::row_sum(const Tensor& a) {
  check_same_graph(a, "row_sum");
  std::vector<double> v(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a.values()[static_cast<size_t>(i) * a.cols() + j];
    v[i] = s;
  }
  return make_out(a.rows(), 1, Op::RowSum, {a.impl_}, std::move(v));
}

Tensor Graph::row_logsumexp(const Tensor& a) {
  check_same_graph(a, "row_logsumexp");
  int n = a.rows(), m = a.cols();
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    const double* row = a.values().data() + static_cast<size_t>(i) * m;
    double mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    v[i] = mx + std::log(s);
  }
  return make_out(n, 1, Op::RowLse, {a.impl_}, std::move(v));
}

Tensor Graph::row_logsumexp_offdiag(const Tensor& a) {
  check_same_graph(a, "row_logsumexp_offdiag");
  if (a.rows() != a.cols())
    throw std::invalid_argument("row_logsumexp_offdiag: matrix must be square");
  int n = a.rows();
  if (n < 2)
    throw std::invalid_argument("row_logsumexp_offdiag: needs at least 2 rows");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    const double* row = a.values().data() + static_cast<size_t>(i) * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) s += std::exp(row[j] - mx);
    v[i] = mx + std::log(s);
  }
  return make_out(n, 1, Op::RowLseOffdiag, {a.impl_}, std::move(v));
}

Tensor Graph::gather_elems(const Tensor& a, const std::vector<int>& cols) {
  check_same_graph(a, "gather_elems");
  if (static_cast<int>(cols.size()) != a.rows())
    throw std::invalid_argument("gather_elems: index count must equal row count");
  std::vector<double> v(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    int c = cols[i];
    if (c < 0 || c >= a.cols())
      throw std::invalid_argument("gather_elems: column index out of range");
    v[i] = a.values()[static_cast<size_t>(i) * a.cols() + c];
  }
  return make_out(a.rows(), 1, Op::GatherElems, {a.impl_}, std::move(v), {}, cols);
}

Tensor Graph::gather_rows(const Tensor& a, const std::vector<int>& idx) {
  check_same_graph(a, "gather_rows");
  if (idx.empty()) throw std::invalid_argument("gather_rows: empty index list");
  int m = static_cast<int>(idx.size()), d = a.cols();
  std::vector<double> v(static_cast<size_t>(m) * d);
  for (int r = 0; r < m; ++r) {
    int i = idx[r];
    if (i < 0 || i >= a.rows())
      throw std::invalid_argument("gather_rows: row index out of range");
    std::memcpy(v.data() + static_cast<size_t>(r) * d,
                a.values().data() + static_cast<size_t>(i) * d, sizeof(double) * d);
  }
  return make_out(m, d, Op::GatherRows, {a.impl_}, std::move(v), {}, idx);
}

Tensor Graph::l2_normalize_rows(const Tensor& a, double eps) {
  check_same_graph(a, "l2_normalize_rows");
  if (eps <= 0.0) throw std::invalid_argument("l2_normalize_rows: eps must be > 0");
  int n = a.rows(), d = a.cols();
  std::vector<double> v(a.values());
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    double* row = v.data() + static_cast<size_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    double norm = std::max(std::sqrt(s), eps);
    norms[i] = norm;
    for (int j = 0; j < d; ++j) row[j] /= norm;
  }
  return make_out(n, d, Op::L2NormRows, {a.impl_}, std::move(v), std::move(norms),
                  {}, eps);
}

Tensor Graph::stop_gradient(const Tensor& a) {
  check_same_graph(a, "stop_gradient");
  return Tensor(a.rows(), a.cols(), a.values(), false);
}

Tensor Graph::batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BnStats& stats, bool training, double momentum,
                         double eps) {
  check_same_graph(x, "batch_norm");
  check_same_graph(gamma, "batch_norm");
  check_same_graph(beta, "batch_norm");
  int n = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d) dim_error("batch_norm(gamma)", x, gamma);
  if (beta.rows() != 1 || beta.cols() != d) dim_error("batch_norm(beta)", x, beta);
  if (stats.dim() != d)
    throw std::invalid_argument("batch_norm: running stats dimension mismatch");

  if (training) {
    if (n < 2)
      throw std::invalid_argument(
          "batch_norm: train mode requires a batch of at least 2 rows");
    std::vector<double> mu(d, 0.0), var(d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) mu[j] += x.values()[static_cast<size_t>(i) * d + j];
    for (int j = 0; j < d; ++j) mu[j] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        double c = x.values()[static_cast<size_t>(i) * d + j] - mu[j];
        var[j] += c * c;
      }
    for (int j = 0; j < d; ++j) var[j] /= n;  // biased, used for normalization

    // saved layout: xhat (n*d), invstd (d)
    std::vector<double> saved(static_cast<size_t>(n) * d + d);
    std::vector<double> v(static_cast<size_t>(n) * d);
    for (int j = 0; j < d; ++j)
      saved[static_cast<size_t>(n) * d + j] = 1.0 / std::sqrt(var[j] + eps);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        size_t k = static_cast<size_t>(i) * d + j;
        double xh = (x.values()[k] - mu[j]) * saved[static_cast<size_t>(n) * d + j];
        saved[k] = xh;
        v[k] = gamma.values()[j] * xh + beta.values()[j];
      }
    // Running stats EMA; variance stored unbiased (n/(n-1) correction).
    double bessel = n > 1 ? static_cast<double>(n) / (n - 1) : 1.0;
    for (int j = 0; j < d; ++j) {
      stats.mean[j] = (1.0 - momentum) * stats.mean[j] + momentum * mu[j];
      stats.var[j] = (1.0 - momentum) * stats.var[j] + momentum * var[j] * bessel;
    }
    return make_out(n, d, Op::BatchNormTrain, {x.impl_, gamma.impl_, beta.impl_},
                    std::move(v), std::move(saved), {}, eps);
  }

  // Eval mode: normalize with running stats; saved layout: xhat (n*d), invstd (d)
  std::vector<double> saved(static_cast<size_t>(n) * d + d);
  std::vector<double> v(static_cast<size_t>(n) * d);
  for (int j = 0; j < d; ++j)
    saved[static_cast<size_t>(n) * d + j] = 1.0 / std::sqrt(stats.var[j] + eps);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      size_t k = static_cast<size_t>(i) * d + j;
      double xh = (x.values()[k] - stats.mean[j]) * saved[static_cast<size_t>(n) * d + j];
      saved[k] = xh;
      v[k] = gamma.values()[j] * xh + beta.values()[j];
    }
  return make_out(n, d, Op::BatchNormEval, {x.impl_, gamma.impl_, beta.impl_},
                  std::move(v), std::move(saved), {}, eps);
}

void Graph::clear() {
  // Detach surviving output tensors so a reused tensor is treated as a leaf,
  // never as a stale reference into the next tape.
  for (auto& node : nodes_) {
    node.out->graph = nullptr;
    node.out->node = -1;
  }
  nodes_.clear();
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar");
  if (loss.impl_->graph != this || loss.impl_->node < 0)
    throw std::invalid_argument("backward: loss was not recorded on this graph");

  int root = loss.impl_->node;
  std::vector<std::vector<double>> adj(root + 1);
  std::vector<char> active(root + 1, 0);
  adj[root] = {1.0};
  active[root] = 1;

  auto adj_for = [&](const std::shared_ptr<Tensor::Impl>& in) -> std::vector<double>* {
    if (in->graph == this && in->node >= 0 && in->node <= root) {
      auto& buf = adj[in->node];
      if (buf.empty()) buf.assign(in->v.size(), 0.0);
      active[in->node] = 1;
      return &buf;
    }
    if (in->requires_grad) {
      if (in->g.empty()) in->g.assign(in->v.size(), 0.0);
      return &in->g;
    }
    return nullptr;
  };

  for (int ni = root; ni >= 0; --ni) {
    if (!active[ni]) continue;
    Node& node = nodes_[ni];
    std::vector<double>& g = adj[ni];
    round_if_f32(g);
    const auto& out = node.out;
    int n = out->rows, m = out->cols;

    switch (node.op) {
      case Op::Add: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        if (auto* db = adj_for(node.ins[1]))
          for (size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
        break;
      }
      case Op::Sub: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        if (auto* db = adj_for(node.ins[1]))
          for (size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
        break;
      }
      case Op::Mul: {
        const auto& av = node.ins[0]->v;
        const auto& bv = node.ins[1]->v;
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv[i];
        if (auto* db = adj_for(node.ins[1]))
          for (size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av[i];
        break;
      }
      case Op::Scale: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * node.c0;
        break;
      }
      case Op::AddScalar: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        break;
      }
      case Op::AddRowVec: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        if (auto* dr = adj_for(node.ins[1]))
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) (*dr)[j] += g[static_cast<size_t>(i) * m + j];
        break;
      }
      case Op::MatMul: {
        const auto& a = node.ins[0];
        const auto& b = node.ins[1];
        // out[n x m] = a[n x k] * b[k x m]
        int k = a->cols;
        if (auto* da = adj_for(a))
          kernels::matmul_nt(g.data(), b->v.data(), da->data(), n, m, k, true);
        if (auto* db = adj_for(b))
          kernels::matmul_tn(a->v.data(), g.data(), db->data(), n, k, m, true);
        break;
      }
      case Op::Transpose: {
        if (auto* da = adj_for(node.ins[0]))
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
              (*da)[static_cast<size_t>(j) * n + i] += g[static_cast<size_t>(i) * m + j];
        break;
      }
      case Op::Exp: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * out->v[i];
        break;
      }
      case Op::Log: {
        const auto& av = node.ins[0]->v;
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] / av[i];
        break;
      }
      case Op::Relu: {
        const auto& av = node.ins[0]->v;
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) (*da)[i] += g[i];
        break;
      }
      case Op::LeakyRelu: {
        const auto& av = node.ins[0]->v;
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i)
            (*da)[i] += g[i] * (av[i] > 0.0 ? 1.0 : node.c0);
        break;
      }
      case Op::Softplus: {
        const auto& av = node.ins[0]->v;
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * sigmoid(av[i]);
        break;
      }
      case Op::Sum: {
        if (auto* da = adj_for(node.ins[0]))
          for (size_t i = 0; i < da->size(); ++i) (*da)[i] += g[0];
        break;
      }
      case Op::Mean: {
        if (auto* da = adj_for(node.ins[0])) {
          double s = g[0] / node.ins[0]->v.size();
          for (size_t i = 0; i < da->size(); ++i) (*da)[i] += s;
        }
        break;
      }
      case Op::RowSum: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a))
          for (int i = 0; i < a->rows; ++i)
            for (int j = 0; j < a->cols; ++j)
              (*da)[static_cast<size_t>(i) * a->cols + j] += g[i];
        break;
      }
      case Op::RowLse: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a)) {
          int cols = a->cols;
          for (int i = 0; i < a->rows; ++i)
            for (int j = 0; j < cols; ++j) {
              size_t k = static_cast<size_t>(i) * cols + j;
              (*da)[k] += g[i] * std::exp(a->v[k] - out->v[i]);
            }
        }
        break;
      }
      case Op::RowLseOffdiag: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a)) {
          int cols = a->cols;
          for (int i = 0; i < a->rows; ++i)
            for (int j = 0; j < cols; ++j) {
              if (j == i) continue;
              size_t k = static_cast<size_t>(i) * cols + j;
              (*da)[k] += g[i] * std::exp(a->v[k] - out->v[i]);
            }
        }
        break;
      }
      case Op::GatherElems: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a))
          for (int i = 0; i < a->rows; ++i)
            (*da)[static_cast<size_t>(i) * a->cols + node.idx[i]] += g[i];
        break;
      }
      case Op::GatherRows: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a)) {
          int d = a->cols;
          for (size_t r = 0; r < node.idx.size(); ++r)
            for (int j = 0; j < d; ++j)
              (*da)[static_cast<size_t>(node.idx[r]) * d + j] +=
                  g[r * static_cast<size_t>(d) + j];
        }
        break;
      }
      case Op::L2NormRows: {
        const auto& a = node.ins[0];
        if (auto* da = adj_for(a)) {
          int d = a->cols;
          for (int i = 0; i < a->rows; ++i) {
            double norm = node.saved[i];
            const double* y = out->v.data() + static_cast<size_t>(i) * d;
            const double* gi = g.data() + static_cast<size_t>(i) * d;
            double* dst = da->data() + static_cast<size_t>(i) * d;
            // Row clamped at eps: y = x / eps is linear in x.
            double rn = 0.0;
            for (int j = 0; j < d; ++j)
              rn += a->v[static_cast<size_t>(i) * d + j] * a->v[static_cast<size_t>(i) * d + j];
            bool clamped = std::sqrt(rn) < norm;
            if (clamped) {
              for (int j = 0; j < d; ++j) dst[j] += gi[j] / norm;
            } else {
              double gy = 0.0;
              for (int j = 0; j < d; ++j) gy += gi[j] * y[j];
              for (int j = 0; j < d; ++j) dst[j] += (gi[j] - gy * y[j]) / norm;
            }
          }
        }
        break;
      }
      case Op::BatchNormTrain: {
        const auto& x = node.ins[0];
        const auto& gamma = node.ins[1];
        int d = x->cols, rows = x->rows;
        const double* xhat = node.saved.data();
        const double* invstd = node.saved.data() + static_cast<size_t>(rows) * d;
        if (auto* dg = adj_for(node.ins[1]))
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j)
              (*dg)[j] += g[static_cast<size_t>(i) * d + j] * xhat[static_cast<size_t>(i) * d + j];
        if (auto* db = adj_for(node.ins[2]))
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) (*db)[j] += g[static_cast<size_t>(i) * d + j];
        if (auto* dx = adj_for(x)) {
          std::vector<double> gmean(d, 0.0), gxmean(d, 0.0);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
              size_t k = static_cast<size_t>(i) * d + j;
              gmean[j] += g[k];
              gxmean[j] += g[k] * xhat[k];
            }
          for (int j = 0; j < d; ++j) {
            gmean[j] /= rows;
            gxmean[j] /= rows;
          }
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
              size_t k = static_cast<size_t>(i) * d + j;
              (*dx)[k] += gamma->v[j] * invstd[j] *
                          (g[k] - gmean[j] - xhat[k] * gxmean[j]);
            }
        }
        break;
      }
      case Op::BatchNormEval: {
        const auto& x = node.ins[0];
        const auto& gamma = node.ins[1];
        int d = x->cols, rows = x->rows;
        const double* xhat = node.saved.data();
        const double* invstd = node.saved.data() + static_cast<size_t>(rows) * d;
        if (auto* dg = adj_for(node.ins[1]))
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j)
              (*dg)[j] += g[static_cast<size_t>(i) * d + j] * xhat[static_cast<size_t>(i) * d + j];
        if (auto* db = adj_for(node.ins[2]))
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) (*db)[j] += g[static_cast<size_t>(i) * d + j];
        if (auto* dx = adj_for(x))
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
              size_t k = static_cast<size_t>(i) * d + j;
              (*dx)[k] += g[k] * gamma->v[j] * invstd[j];
            }
        break;
      }
    }
    adj[ni].clear();
    adj[ni].shrink_to_fit();
  }

  // Leaf grads rounded once per backward in f32 mode.
  if (precision_ == Precision::f32)
    for (auto& node : nodes_)
      for (auto& in : node.ins)
        if (in->requires_grad && in->node < 0 && !in->g.empty()) round_if_f32(in->g);
}

}  // namespace roma
