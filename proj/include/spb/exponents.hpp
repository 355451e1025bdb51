#pragma once

#include <optional>

#include "spb/renyi.hpp"

namespace spb {

/// Sphere-packing exponent at one rate: the supremum over orders in (0,1) of
/// ((1-order)/order) * (C_order - rate).
struct SpeResult {
  double rate_nats = 0.0;
  double value = 0.0;           // +inf encoded via `infinite`
  bool infinite = false;        // rate below the order-0 capacity
  std::optional<double> achieving_order;  // none when the sup is degenerate
  double grid_resolution = 0.0;
};

/// Shared solver context: order-0/order-1 capacities and the memoized
/// capacity evaluations the exponent computations lean on.
class ExponentContext {
 public:
  explicit ExponentContext(const Dmc& w, double tol = 1e-10);
  const Dmc& channel() const { return w_; }
  double tol() const { return tol_; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }
  double c_half() const { return c_half_; }
  double capacity(double order);          // cached C_order
  CapacityCache& cache() { return cache_; }

 private:
  Dmc w_;
  double tol_;
  CapacityCache cache_;
  double c0_, c1_, c_half_;
};

SpeResult sphere_packing_exponent(ExponentContext& ctx, double rate);
SpeResult sphere_packing_exponent(const Dmc& w, double rate, double tol = 1e-8);

/// Order r1 in (0,1) with C_{r1} = rate, by bisection on the nondecreasing
/// capacity-in-order map. Requires c0 < rate < c1.
double find_order_for_rate(ExponentContext& ctx, double rate, double tol = 1e-10);
double find_order_for_rate(const Dmc& w, double rate, double tol = 1e-10);

/// Order r2 in (r1, 1) with ((1-r2)/r2) C_{r2} = E_sp(rate1), by bisection on
/// the nonincreasing map. Requires c0 < rate1 < c1.
double find_order_for_spe(ExponentContext& ctx, double rate1, double tol = 1e-10);
double find_order_for_spe(const Dmc& w, double rate1, double tol = 1e-10);

/// Inputs and derived constants of the non-asymptotic lower bound on a
/// length-n feedback code's error probability. Block length and subblock
/// count are doubles because the asymptotic crossover analysis takes them
/// far beyond 2^64; desk-scale callers pass exact small integers.
struct SpbParameters {
  double n = 0;
  double k = 0;
  double epsilon = 0.0;
  double rate0 = 0.0, rate1 = 0.0;
  double rate = 0.0;  // code rate the bound is evaluated at
  double rho1 = 0.0, rho2 = 0.0;
  double c0 = 0.0, c1 = 0.0, c_half = 0.0;
  double e_sp_rate1 = 0.0;
  double delta1 = 0.0, delta2 = 0.0;
  bool rate_window_ok = false;  // rate1 >= rate >= rate0 + delta1 (soft)
};

/// Populates every field and the soft rate-window flag. Structural
/// violations (k > n, epsilon above its cap, rates outside (c0, c1)) are
/// hard errors.
SpbParameters spb_constants(ExponentContext& ctx, double n, double k, double epsilon,
                            double rate0, double rate1, double rate, double tol = 1e-10);

struct SpbBound {
  double value = 0.0;  // exp(-n [E_sp(rate - delta1) + delta2]) clamped to [0,1]
  bool vacuous = false;  // rate - delta1 below the order-0 capacity
  double exponent = 0.0;  // E_sp(rate - delta1) + delta2 when finite
};
SpbBound spb_lower_bound(ExponentContext& ctx, const SpbParameters& params);

/// Asymptotic-form bound exp(-n [E_sp(rate - 2 ln n / n^(1/3)) + 2 ln n / n^(1/3)])
/// with hypothesis checks and the crossover block length n0 past which the
/// explicit delta terms (with epsilon_n = min(rho1, 1-rho2)/n and
/// k_n = floor(n^(2/3))) fall below 2 ln n / n^(1/3).
struct AsymptoticBound {
  double value = 0.0;
  bool vacuous = false;
  bool hypothesis_ok = false;  // rate1 > rate > rate0 + 2 ln n / n^(1/3)
  double slack = 0.0;          // 2 ln n / n^(1/3)
  double n0 = 0.0;             // detected crossover
  double max_delta = 0.0;      // max(delta1, delta2) at this n under the recipe
  double rho1 = 0.0, rho2 = 0.0;  // orders behind the recipe's epsilon_n
};
AsymptoticBound asymptotic_bound(ExponentContext& ctx, double rate, double n,
                                 std::optional<double> rate0 = std::nullopt,
                                 std::optional<double> rate1 = std::nullopt,
                                 double tol = 1e-10);

/// delta1/delta2 from the explicit formulas at given (n, k, epsilon); used by
/// spb_constants and the asymptotic recipe.
double delta1_formula(double n, double k, double epsilon, double c_half, double rho2);
double delta2_formula(double n, double k, double epsilon, double c_half, double rho1,
                      double rate);

/// CSV rows: rate, e_sp, achieving_order (empty when degenerate), infinite flag.
void write_spe_csv(std::ostream& out, const std::vector<SpeResult>& results);
/// CSV rows: n, delta1, delta2, bound, vacuous flag.
void write_bound_csv(std::ostream& out, const std::vector<SpbParameters>& params,
                     const std::vector<SpbBound>& bounds);

}  // namespace spb
