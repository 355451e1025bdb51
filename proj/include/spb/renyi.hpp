#pragma once

#include <iosfwd>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "spb/pmf.hpp"

namespace spb {

/// Input distribution for a channel; dimension equals the input alphabet size.
using Prior = Pmf;

struct CapacityResult {
  double order = 0.0;
  double capacity_nats = 0.0;
  Pmf center;
  Prior optimal_prior;
  long iterations = 0;
  /// max_x D_order(W(x) || center) - capacity_nats; within solver tolerance
  /// when converged.
  double residual = 0.0;
  bool converged = false;
};

/// Order-a information of a prior through a channel, in nats. Order 1 is
/// mutual information against the output marginal.
double renyi_information(double order, const Prior& prior, const Dmc& w);

/// Normalized order-a mean of the rows weighted by the prior; the exact
/// output marginal at order 1.
Pmf renyi_mean(double order, const Prior& prior, const Dmc& w);

/// Gallager exponent function E0(s, prior) = s * I_{1/(1+s)}(prior; W).
/// The slope parameter s > 0 maps to the order 1/(1+s).
double gallager_e0(double s, const Prior& prior, const Dmc& w);

struct CapacitySolveOptions {
  double tol = 1e-10;
  long max_iterations = 100000;
  std::optional<Prior> start;  // uniform when absent
};

/// Maximizes the order-a information over priors by an alternating
/// fixed-point iteration (center update via renyi_mean, prior update by
/// exponential reweighting with the per-row divergence), stopping on the
/// duality gap max_x D(W(x)||q) - I(P) < tol. Non-convergence at the
/// iteration cap returns the best iterate with converged = false.
CapacityResult renyi_capacity(double order, const Dmc& w, const CapacitySolveOptions& opt);
CapacityResult renyi_capacity(double order, const Dmc& w, double tol = 1e-10);

/// Continuous extension of the capacity at order 0: evaluated along orders
/// 2^-j until successive values differ by less than tol (j capped at 40).
double capacity_order_zero(const Dmc& w, double tol = 1e-9);

/// Capacities/centers on an ascending order grid, warm-starting each solve
/// from the previous optimal prior. Deterministic and sequential.
std::vector<CapacityResult> capacity_sweep(const Dmc& w, std::span<const double> orders,
                                           double tol = 1e-10);

/// Centers at each grid order; independent solves, parallelizable over grid
/// points with deterministic output ordering.
std::vector<CapacityResult> center_curve(const Dmc& w, std::span<const double> orders,
                                         double tol = 1e-10, int jobs = 1);

/// CSV rows: order, capacity_nats, residual, center components.
void write_capacity_csv(std::ostream& out, const Dmc& w,
                        const std::vector<CapacityResult>& results);

/// Thread-safe memo of capacity solves keyed by (channel digest, order
/// rounded to 12 decimals). Inserts are idempotent; references stay valid
/// for the cache lifetime.
class CapacityCache {
 public:
  explicit CapacityCache(double tol = 1e-10) : tol_(tol) {}
  const CapacityResult& get(const Dmc& w, double order);
  double tol() const { return tol_; }

 private:
  struct Key {
    uint64_t digest;
    long long order_fixed;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return std::hash<uint64_t>()(k.digest ^ (static_cast<uint64_t>(k.order_fixed) * 0x9e3779b97f4a7c15ull));
    }
  };
  double tol_;
  std::mutex mu_;
  std::unordered_map<Key, CapacityResult, KeyHash> memo_;
};

}  // namespace spb
