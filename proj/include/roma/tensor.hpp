#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace roma {

class Graph;

enum class Precision { f32, f64 };

// Dense 2-D tensor (row-major). Scalars are 1x1, row vectors 1xd, column
// vectors nx1. Copies share storage; use clone()/detach() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, bool requires_grad = false);
  Tensor(int rows, int cols, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> v, bool requires_grad = false);
  static Tensor identity(int n);
  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double v);

  bool defined() const { return impl_ != nullptr; }
  int rows() const;
  int cols() const;
  int size() const;

  double at(int i, int j) const;
  double& at(int i, int j);
  double scalar_value() const;  // requires 1x1

  const std::vector<double>& values() const;
  std::vector<double>& values();

  bool requires_grad() const;
  void set_requires_grad(bool b);

  // Gradient buffer; allocated zero-filled on first access.
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  bool all_finite() const;

  // Deep copy of the values, detached from any graph, no gradient.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    int rows = 0, cols = 0;
    std::vector<double> v;
    std::vector<double> g;  // empty until touched
    bool requires_grad = false;
    const Graph* graph = nullptr;  // recording graph, if any
    int node = -1;                 // node id in that graph
  };
  std::shared_ptr<Impl> impl_;
  friend class Graph;
};

// Running statistics of a batch-norm layer. Not gradient-participating.
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;
  explicit BnStats(int dim = 0) : mean(dim, 0.0), var(dim, 1.0) {}
  int dim() const { return static_cast<int>(mean.size()); }
};

// Tape of recorded operations. Ops are methods; a node is recorded only when
// some input participates in the gradient graph, so the same methods double as
// plain (non-recording) math on constant tensors. Forward/backward on one
// Graph is single-threaded; all kernels are serial with a fixed reduction
// order, so results are bit-deterministic.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void set_precision(Precision p) { precision_ = p; }
  Precision precision() const { return precision_; }

  // Elementwise / scalar
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor relu(const Tensor& a);        // max(0, x); derivative 0 at x == 0
  Tensor leaky_relu(const Tensor& a, double slope);  // derivative = slope at x == 0
  Tensor softplus(const Tensor& a);    // log(1 + e^x), overflow-safe

  // Broadcast: add a 1xd row vector to every row of a nxd matrix.
  Tensor add_rowvec(const Tensor& a, const Tensor& r);

  // Linear algebra
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);

  // Reductions
  Tensor sum(const Tensor& a);      // 1x1
  Tensor mean(const Tensor& a);     // 1x1
  Tensor row_sum(const Tensor& a);  // nx1

  // Row-wise softmax-cross-entropy building blocks
  Tensor row_logsumexp(const Tensor& a);          // nx1, max-subtracted
  Tensor row_logsumexp_offdiag(const Tensor& a);  // nxn input; excludes a[i][i]
  // out[i] = a[i, cols[i]]
  Tensor gather_elems(const Tensor& a, const std::vector<int>& cols);

  // Row selection; backward scatter-adds.
  Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);

  // Each row divided by max(||row||_2, eps).
  Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

  // Identity forward, zero gradient backward.
  Tensor stop_gradient(const Tensor& a);

  // Batch normalization over rows. Train mode (requires n >= 2) normalizes
  // with biased batch variance and updates `stats` by EMA with `momentum`
  // (running variance uses the unbiased estimate). Eval mode uses `stats`.
  Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BnStats& stats, bool training, double momentum = 0.1,
                    double eps = 1e-5);

  // Reverse pass from a scalar loss recorded on this graph. Accumulates into
  // the grad buffers of every reachable requires_grad leaf; repeated calls
  // accumulate further.
  void backward(const Tensor& loss);

  void clear();
  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Add, Sub, Mul, Scale, AddScalar, AddRowVec, MatMul, Transpose,
    Exp, Log, Relu, LeakyRelu, Softplus, Sum, Mean, RowSum,
    RowLse, RowLseOffdiag, GatherElems, GatherRows, L2NormRows,
    BatchNormTrain, BatchNormEval,
  };
  struct Node {
    Op op;
    std::vector<std::shared_ptr<Tensor::Impl>> ins;
    std::shared_ptr<Tensor::Impl> out;
    std::vector<double> saved;
    std::vector<int> idx;
    double c0 = 0.0, c1 = 0.0;
  };

  bool tracked(const Tensor& t) const;
  void check_same_graph(const Tensor& t, const char* op) const;
  Tensor make_out(int rows, int cols, Op op,
                  std::vector<std::shared_ptr<Tensor::Impl>> ins,
                  std::vector<double> values, std::vector<double> saved = {},
                  std::vector<int> idx = {}, double c0 = 0.0, double c1 = 0.0);
  void round_if_f32(std::vector<double>& v) const;

  std::vector<Node> nodes_;
  Precision precision_ = Precision::f64;
};

// Serial matmul kernels shared by forward and backward passes.
namespace kernels {
// C[m x n] += or = A[m x k] * B[k x n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);
// C[m x k] += A[m x n] * B[k x n]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k,
               bool accumulate);
// C[k x n] += A[m x k]^T * B[m x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);
}  // namespace kernels

}  // namespace roma
