#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace roma::selftest {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measurement behind the verdict
};

// Gradient checks: central finite differences on every leaf entry of random
// instances (dims <= 16, batch <= 8), 64-bit, rel. error tolerance 1e-4.
PropertyResult grad_triplet_ce_identity(uint64_t seed, int instances = 100);
PropertyResult grad_triplet_ce_random_map(uint64_t seed, int instances = 100);
PropertyResult grad_nt_xent(uint64_t seed, int instances = 100);
PropertyResult grad_simsiam(uint64_t seed, int instances = 100);

// u^T (L^T L) v computed via an explicit M = L^T L equals the dot product of
// the two projections, rel. error < 1e-10, across all entry distributions.
PropertyResult psd_bilinear_equivalence(uint64_t seed,
                                        int trials_per_distribution = 1000);

// Identity-map losses equal scalar-loop references bit-for-bit.
PropertyResult identity_reduction_triplet_ce(uint64_t seed,
                                             int instances = 100);
PropertyResult identity_reduction_nt_xent(uint64_t seed, int instances = 100);
PropertyResult identity_reduction_simsiam(uint64_t seed, int instances = 100);

// Hand-derived loss values reproduce to 1e-9.
PropertyResult closed_form_triplet_ce();
PropertyResult closed_form_nt_xent();
PropertyResult closed_form_simsiam();

// The combined loss is non-increasing in s+ and non-decreasing in s- on a
// grid over [-1, 1]^2.
PropertyResult hinge_monotonicity();
// With faithful_eq1 the hinge term's direction in s+ flips; the suite passes
// when the flip is observed.
PropertyResult hinge_sign_flip();
// When s+ - s- >= gamma the hinge contributes exactly zero gradient.
PropertyResult hinge_zero_plateau();

// Every property in a fixed order.
std::vector<PropertyResult> run_all_collect(uint64_t seed);

// Prints one "PASS name  detail" / "FAIL name  detail" line per property and
// a summary; returns true iff everything passed.
bool run_all(std::ostream& out, uint64_t seed = 2026);

}  // namespace roma::selftest
