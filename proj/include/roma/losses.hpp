#pragma once

#include <string>
#include <vector>

#include "roma/rngmap.hpp"
#include "roma/tensor.hpp"

namespace roma {

enum class LossKind { triplet_ce, nt_xent, simsiam };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct LossParams {
  double gamma = 1.0;   // triplet margin
  double lambda = 8.0;  // CE weight
  double tau = 0.5;     // softmax temperature
  // Weight on the hinge term; 0 gives the pure-CE variant used by the loss
  // ablation (the lambda*CE term is untouched).
  double hinge_weight = 1.0;
  // Evaluate the hinge exactly as [s+ - s- + gamma]+ instead of the standard
  // [gamma - s+ + s-]+. Off by default: the swapped sign is the only reading
  // consistent with the CE term (it rewards similar positives).
  bool faithful_eq1 = false;

  void validate() const;  // gamma >= 0, lambda >= 0, tau > 0, hinge_weight >= 0
};

// One (anchor, positive, negative) row per source sample. Rows must be
// l2-normalized; the negative of row i must come from a different source.
struct TripletBatch {
  Tensor anchors;    // B x d
  Tensor positives;  // B x d
  Tensor negatives;  // B x d
};

namespace losses {

// Sim(u, v) = u^T M v realized as the dot product of the two projections
// (renormalized when `renormalize`). With the identity map and unit inputs
// this is exactly the cosine. Returns a 1x1 tensor.
Tensor bilinear_sim(Graph& g, const Tensor& u, const Tensor& v,
                    const RandomMap& map, bool renormalize = true);

// Mean over rows of  [gamma - s+ + s-]+  +  lambda * CE(s+, s-; tau)
// where s+ = Sim(anchor, positive), s- = Sim(anchor, negative) and
// CE = log(1 + exp((s- - s+)/tau)), evaluated in overflow-safe form.
Tensor triplet_ce_loss(Graph& g, const TripletBatch& batch,
                       const LossParams& params, const RandomMap& map,
                       bool renormalize = true);

// NT-Xent over 2N views: mean over anchors i of
//   -log( exp(s(i, pair(i))/tau) / sum_{j != i} exp(s(i,j)/tau) ).
// pair_index must be an involution with pair(i) != i; N >= 2.
Tensor nt_xent_roma(Graph& g, const Tensor& views,
                    const std::vector<int>& pair_index,
                    const LossParams& params, const RandomMap& map,
                    bool renormalize = true);

// Symmetrized negative similarity with stop-gradient applied to z1/z2
// internally: mean over rows of -1/2 Sim(p1, z2) - 1/2 Sim(p2, z1).
Tensor simsiam_roma(Graph& g, const Tensor& p1, const Tensor& p2,
                    const Tensor& z1, const Tensor& z2, const RandomMap& map,
                    bool renormalize = true);

}  // namespace losses

}  // namespace roma
