#pragma once

#include <utility>

#include "spb/pmf.hpp"
#include "spb/renyi.hpp"

namespace spb {

/// Normalized geometric interpolation w^order q^(1-order) together with the
/// ingredients it was built from. The normalizer is exp((1-order) * D) with
/// D the order-a divergence of the pair, which makes the tilted vector a
/// pmf by construction.
struct TiltedPmf {
  Pmf base_w;
  Pmf base_q;
  double order = 1.0;
  Pmf tilted;
  double divergence_at_order = 0.0;
};

/// Requires D_order(w||q) finite. Entries where w vanishes stay zero for all
/// orders; order 1 returns w itself.
TiltedPmf tilt_pmf(double order, const Pmf& w, const Pmf& q);

/// Each row tilted toward the order-a center of the channel. Order 1 returns
/// the channel unchanged. The center comes from `cache` so repeated orders
/// (the construction sweeps many) solve once.
Dmc selftilt_channel(double order, const Dmc& w, CapacityCache& cache);
Dmc selftilt_channel(double order, const Dmc& w, double tol = 1e-10);

/// order * D1(tilted||w) + (1-order) * D1(tilted||q) - (1-order) * D_order(w||q);
/// identically zero in exact arithmetic, |result| < 1e-10 numerically.
double tilted_kld_residual(double order, const Pmf& w, const Pmf& q);

/// Second moments of the log-ratios under the tilted pmf against their
/// closed-form ceilings; each pair satisfies lhs <= rhs.
struct SecondMomentCheck {
  double lhs_w, rhs_w;  // against the w side
  double lhs_q, rhs_q;  // against the q side
};
SecondMomentCheck second_moment_check(double order, const Pmf& w, const Pmf& q);

}  // namespace spb
