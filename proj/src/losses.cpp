#include "roma/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace roma {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "triplet_ce") return LossKind::triplet_ce;
  if (s == "nt_xent") return LossKind::nt_xent;
  if (s == "simsiam") return LossKind::simsiam;
  throw std::invalid_argument("unknown loss kind: " + s);
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::triplet_ce: return "triplet_ce";
    case LossKind::nt_xent: return "nt_xent";
    case LossKind::simsiam: return "simsiam";
  }
  return "?";
}

void LossParams::validate() const {
  if (gamma < 0.0) throw std::invalid_argument("loss.gamma must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("loss.lambda must be >= 0");
  if (tau <= 0.0) throw std::invalid_argument("loss.tau must be > 0");
  if (hinge_weight < 0.0)
    throw std::invalid_argument("loss.hinge_weight must be >= 0");
}

namespace losses {

namespace {

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite())
    throw std::domain_error(std::string(what) + ": non-finite embeddings");
}

void check_unit_rows(const Tensor& t, const char* what, double tol = 1e-6) {
  for (int i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < t.cols(); ++j) s += t.at(i, j) * t.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > tol)
      throw std::invalid_argument(std::string(what) + ": row " +
                                  std::to_string(i) + " is not unit-norm");
  }
}

// Row-wise dot product of two equally shaped matrices -> n x 1.
Tensor row_dot(Graph& g, const Tensor& a, const Tensor& b) {
  return g.row_sum(g.mul(a, b));
}

}  // namespace

Tensor bilinear_sim(Graph& g, const Tensor& u, const Tensor& v,
                    const RandomMap& map, bool renormalize) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols())
    throw std::invalid_argument("bilinear_sim: expects two 1 x d rows");
  check_finite(u, "bilinear_sim");
  check_finite(v, "bilinear_sim");
  Tensor pu = rngmap::project(g, map, u, renormalize);
  Tensor pv = rngmap::project(g, map, v, renormalize);
  return g.sum(g.mul(pu, pv));
}

Tensor triplet_ce_loss(Graph& g, const TripletBatch& batch,
                       const LossParams& params, const RandomMap& map,
                       bool renormalize) {
  params.validate();
  const Tensor& a = batch.anchors;
  const Tensor& p = batch.positives;
  const Tensor& n = batch.negatives;
  if (a.rows() != p.rows() || a.rows() != n.rows() || a.cols() != p.cols() ||
      a.cols() != n.cols())
    throw std::invalid_argument("triplet_ce_loss: batch shapes disagree");
  if (a.rows() < 1) throw std::invalid_argument("triplet_ce_loss: empty batch");
  check_finite(a, "triplet_ce_loss");
  check_finite(p, "triplet_ce_loss");
  check_finite(n, "triplet_ce_loss");
  check_unit_rows(a, "triplet_ce_loss anchors");
  check_unit_rows(p, "triplet_ce_loss positives");
  check_unit_rows(n, "triplet_ce_loss negatives");

  Tensor pa = rngmap::project(g, map, a, renormalize);
  Tensor pp = rngmap::project(g, map, p, renormalize);
  Tensor pn = rngmap::project(g, map, n, renormalize);

  Tensor s_pos = row_dot(g, pa, pp);  // B x 1
  Tensor s_neg = row_dot(g, pa, pn);  // B x 1

  // Standard convention [gamma - s+ + s-]+ ; the printed-form flag evaluates
  // [s+ - s- + gamma]+ instead.
  Tensor hinge_arg = params.faithful_eq1
                         ? g.add_scalar(g.sub(s_pos, s_neg), params.gamma)
                         : g.add_scalar(g.sub(s_neg, s_pos), params.gamma);
  Tensor hinge = g.relu(hinge_arg);
  if (params.hinge_weight != 1.0) hinge = g.scale(hinge, params.hinge_weight);

  // CE = -log( e^{s+/tau} / (e^{s+/tau} + e^{s-/tau}) )
  //    = softplus((s- - s+)/tau), overflow-safe by construction.
  Tensor ce = g.softplus(g.scale(g.sub(s_neg, s_pos), 1.0 / params.tau));

  return g.mean(g.add(hinge, g.scale(ce, params.lambda)));
}

Tensor nt_xent_roma(Graph& g, const Tensor& views,
                    const std::vector<int>& pair_index,
                    const LossParams& params, const RandomMap& map,
                    bool renormalize) {
  params.validate();
  int m = views.rows();
  if (m < 4 || m % 2 != 0)
    throw std::invalid_argument(
        "nt_xent_roma: needs an even number of views with N >= 2");
  if (static_cast<int>(pair_index.size()) != m)
    throw std::invalid_argument("nt_xent_roma: pair_index size mismatch");
  for (int i = 0; i < m; ++i) {
    int j = pair_index[i];
    if (j < 0 || j >= m || j == i || pair_index[j] != i)
      throw std::invalid_argument(
          "nt_xent_roma: pair_index must be a fixed-point-free involution");
  }
  check_finite(views, "nt_xent_roma");
  check_unit_rows(views, "nt_xent_roma views");

  Tensor pv = rngmap::project(g, map, views, renormalize);
  Tensor logits = g.scale(g.matmul(pv, g.transpose(pv)), 1.0 / params.tau);
  Tensor denom = g.row_logsumexp_offdiag(logits);  // excludes j == i
  Tensor pos = g.gather_elems(logits, pair_index);
  return g.mean(g.sub(denom, pos));
}

Tensor simsiam_roma(Graph& g, const Tensor& p1, const Tensor& p2,
                    const Tensor& z1, const Tensor& z2, const RandomMap& map,
                    bool renormalize) {
  if (p1.rows() != p2.rows() || p1.rows() != z1.rows() ||
      p1.rows() != z2.rows() || p1.cols() != p2.cols() ||
      p1.cols() != z1.cols() || p1.cols() != z2.cols())
    throw std::invalid_argument("simsiam_roma: shapes disagree");
  check_finite(p1, "simsiam_roma");
  check_finite(p2, "simsiam_roma");
  check_finite(z1, "simsiam_roma");
  check_finite(z2, "simsiam_roma");
  check_unit_rows(p1, "simsiam_roma p1");
  check_unit_rows(p2, "simsiam_roma p2");
  check_unit_rows(z1, "simsiam_roma z1");
  check_unit_rows(z2, "simsiam_roma z2");

  Tensor zs1 = g.stop_gradient(z1);
  Tensor zs2 = g.stop_gradient(z2);

  Tensor s1 = row_dot(g, rngmap::project(g, map, p1, renormalize),
                      rngmap::project(g, map, zs2, renormalize));
  Tensor s2 = row_dot(g, rngmap::project(g, map, p2, renormalize),
                      rngmap::project(g, map, zs1, renormalize));
  return g.mean(g.scale(g.add(s1, s2), -0.5));
}

}  // namespace losses

}  // namespace roma
