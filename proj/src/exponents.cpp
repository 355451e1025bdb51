#include "spb/exponents.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace spb {

namespace {

double spe_objective(ExponentContext& ctx, double order, double rate) {
  return (1.0 - order) / order * (ctx.capacity(order) - rate);
}

}  // namespace

ExponentContext::ExponentContext(const Dmc& w, double tol)
    : w_(w), tol_(tol), cache_(tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("ExponentContext: tol must be positive");
  c0_ = capacity_order_zero(w_, std::max(tol, 1e-11));
  c1_ = cache_.get(w_, 1.0).capacity_nats;
  c_half_ = cache_.get(w_, 0.5).capacity_nats;
}

double ExponentContext::capacity(double order) { return cache_.get(w_, order).capacity_nats; }

SpeResult sphere_packing_exponent(ExponentContext& ctx, double rate) {
  if (!(rate >= 0.0)) throw std::invalid_argument("sphere_packing_exponent: rate must be >= 0");
  SpeResult out;
  out.rate_nats = rate;
  if (rate >= ctx.c1()) {
    // Every term (1-a)/a (C_a - rate) is <= 0 and tends to 0 as a -> 1.
    out.value = 0.0;
    return out;
  }
  if (rate < ctx.c0() - 1e-9) {
    out.infinite = true;
    out.value = kPosInf;
    return out;
  }

  // Coarse logit-spaced grid over (0,1), then golden-section refinement on
  // the best bracket. No unimodality is assumed beyond the bracket.
  constexpr int kGrid = 256;
  std::vector<double> orders(kGrid), values(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    double u = -16.0 + 32.0 * i / (kGrid - 1);
    orders[i] = 1.0 / (1.0 + std::exp(-u));
    values[i] = spe_objective(ctx, orders[i], rate);
  }
  int best = 0;
  for (int i = 1; i < kGrid; ++i)
    if (values[i] > values[best]) best = i;

  double lo = orders[std::max(0, best - 1)];
  double hi = orders[std::min(kGrid - 1, best + 1)];
  out.grid_resolution = hi - lo;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = spe_objective(ctx, x1, rate), f2 = spe_objective(ctx, x2, rate);
  for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = spe_objective(ctx, x1, rate);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = spe_objective(ctx, x2, rate);
    }
  }
  double order_hat = f1 >= f2 ? x1 : x2;
  double value_hat = std::max(f1, f2);
  if (values[best] > value_hat) {
    value_hat = values[best];
    order_hat = orders[best];
  }
  out.value = std::max(value_hat, 0.0);
  out.achieving_order = order_hat;
  return out;
}

SpeResult sphere_packing_exponent(const Dmc& w, double rate, double tol) {
  ExponentContext ctx(w, tol);
  return sphere_packing_exponent(ctx, rate);
}

namespace {

void require_open_window(ExponentContext& ctx, double rate, const char* who) {
  if (std::abs(ctx.c1() - ctx.c0()) < 1e-9)
    throw std::invalid_argument(std::string(who) + ": order-0 and order-1 capacities coincide");
  if (!(rate > ctx.c0() && rate < ctx.c1()))
    throw std::invalid_argument(std::string(who) + ": rate " + fmt12(rate) +
                                " outside (C0, C1) = (" + fmt12(ctx.c0()) + ", " +
                                fmt12(ctx.c1()) + ")");
}

}  // namespace

double find_order_for_rate(ExponentContext& ctx, double rate, double tol) {
  require_open_window(ctx, rate, "find_order_for_rate");
  double lo = 1e-9, hi = 1.0;
  // C is nondecreasing in the order; establish the bracket at the bottom.
  while (ctx.capacity(lo) >= rate) {
    lo *= 0.1;
    if (lo < 1e-300)
      throw std::invalid_argument("find_order_for_rate: no bracket (rate at or below C0)");
  }
  double best = lo, best_err = kPosInf;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    double mid = 0.5 * (lo + hi);
    double c = ctx.capacity(mid);
    double err = std::abs(c - rate);
    if (err < best_err) {
      best_err = err;
      best = mid;
    }
    if (err < tol) return mid;
    (c < rate ? lo : hi) = mid;
  }
  return best;
}

double find_order_for_rate(const Dmc& w, double rate, double tol) {
  ExponentContext ctx(w, std::min(tol, 1e-10));
  return find_order_for_rate(ctx, rate, tol);
}

double find_order_for_spe(ExponentContext& ctx, double rate1, double tol) {
  require_open_window(ctx, rate1, "find_order_for_spe");
  SpeResult spe = sphere_packing_exponent(ctx, rate1);
  double target = spe.value;
  auto phi = [&](double order) { return (1.0 - order) / order * ctx.capacity(order); };
  // phi is nonincreasing, phi -> 0 as order -> 1, and at the achieving order
  // phi exceeds the target by ((1-a)/a) * rate1 > 0.
  double lo = spe.achieving_order.value_or(0.5);
  while (phi(lo) <= target) {
    lo = 0.5 * lo;
    if (lo < 1e-12)
      throw std::invalid_argument("find_order_for_spe: no bracket below the target");
  }
  double hi = 1.0 - 1e-14;
  double best = lo, best_err = kPosInf;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    double mid = 0.5 * (lo + hi);
    double v = phi(mid);
    double err = std::abs(v - target);
    if (err < best_err) {
      best_err = err;
      best = mid;
    }
    if (err < tol) return mid;
    (v > target ? lo : hi) = mid;
  }
  return best;
}

double find_order_for_spe(const Dmc& w, double rate1, double tol) {
  ExponentContext ctx(w, std::min(tol, 1e-10));
  return find_order_for_spe(ctx, rate1, tol);
}

double delta1_formula(double n, double k, double epsilon, double c_half, double rho2) {
  return std::log(4.0) / n + 8.0 * (2.0 + c_half) / ((1.0 - rho2) * std::sqrt(k)) +
         k / n * std::log(n + 1.0 / epsilon);
}

double delta2_formula(double n, double k, double epsilon, double c_half, double rho1,
                      double rate) {
  return std::log(4.0) / n + 8.0 * (2.0 + c_half) / (rho1 * std::sqrt(k)) +
         k * std::log(n) / n + 2.0 * rate * epsilon / (rho1 * rho1);
}

SpbParameters spb_constants(ExponentContext& ctx, double n, double k, double epsilon,
                            double rate0, double rate1, double rate, double tol) {
  if (!(n >= 1.0)) throw std::invalid_argument("spb_constants: n must be >= 1");
  if (!(k >= 1.0 && k <= n)) throw std::invalid_argument("spb_constants: need 1 <= k <= n");
  if (!(epsilon > 0.0)) throw std::invalid_argument("spb_constants: epsilon must be positive");
  if (!(rate0 < rate1))
    throw std::invalid_argument("spb_constants: need rate0 < rate1");
  require_open_window(ctx, rate0, "spb_constants(rate0)");
  require_open_window(ctx, rate1, "spb_constants(rate1)");

  SpbParameters p;
  p.n = n;
  p.k = k;
  p.epsilon = epsilon;
  p.rate0 = rate0;
  p.rate1 = rate1;
  p.rate = rate;
  p.c0 = ctx.c0();
  p.c1 = ctx.c1();
  p.c_half = ctx.c_half();
  p.rho1 = find_order_for_rate(ctx, rate0, tol);
  p.rho2 = find_order_for_spe(ctx, rate1, tol);
  p.e_sp_rate1 = sphere_packing_exponent(ctx, rate1).value;
  double eps_cap = 0.5 * std::min(p.rho1, 1.0 - p.rho2);
  if (epsilon > eps_cap + 1e-12)
    throw std::invalid_argument("spb_constants: epsilon exceeds min(rho1, 1-rho2)/2 = " +
                                fmt12(eps_cap));
  p.delta1 = delta1_formula(n, k, epsilon, p.c_half, p.rho2);
  p.delta2 = delta2_formula(n, k, epsilon, p.c_half, p.rho1, rate);
  p.rate_window_ok = rate1 >= rate && rate >= rate0 + p.delta1;
  return p;
}

SpbBound spb_lower_bound(ExponentContext& ctx, const SpbParameters& params) {
  SpbBound out;
  double shifted = params.rate - params.delta1;
  if (shifted < 0.0) {
    out.vacuous = true;
    return out;
  }
  SpeResult spe = sphere_packing_exponent(ctx, shifted);
  if (spe.infinite) {
    out.vacuous = true;
    return out;
  }
  out.exponent = spe.value + params.delta2;
  out.value = std::clamp(std::exp(-params.n * out.exponent), 0.0, 1.0);
  return out;
}

AsymptoticBound asymptotic_bound(ExponentContext& ctx, double rate, double n,
                                 std::optional<double> rate0_in,
                                 std::optional<double> rate1_in, double tol) {
  if (!(n >= 2.0)) throw std::invalid_argument("asymptotic_bound: n must be >= 2");
  double span = ctx.c1() - ctx.c0();
  if (!(span > 1e-9))
    throw std::invalid_argument("asymptotic_bound: order-0 and order-1 capacities coincide");
  double rate0 = rate0_in.value_or(ctx.c0() + 0.1 * span);
  double rate1 = rate1_in.value_or(ctx.c1() - 0.1 * span);

  AsymptoticBound out;
  out.rho1 = find_order_for_rate(ctx, rate0, tol);
  out.rho2 = find_order_for_spe(ctx, rate1, tol);
  double rho1 = out.rho1, rho2 = out.rho2;
  double eps_scale = std::min(rho1, 1.0 - rho2);

  auto slack_at = [](double m) { return 2.0 * std::log(m) / std::cbrt(m); };
  auto max_delta_at = [&](double m) {
    double km = std::floor(std::cbrt(m * m));
    double em = eps_scale / m;
    return std::max(delta1_formula(m, km, em, ctx.c_half(), rho2),
                    delta2_formula(m, km, em, ctx.c_half(), rho1, rate));
  };

  out.slack = slack_at(n);
  out.max_delta = max_delta_at(n);
  out.hypothesis_ok = rate1 > rate && rate > rate0 + out.slack;

  // Crossover: smallest block length where the explicit deltas drop below
  // the asymptotic slack. Doubling then bisection; n is treated as a real.
  double hi = 8.0;
  while (max_delta_at(hi) > slack_at(hi) && hi < 1e60) hi *= 2.0;
  double lo = hi / 2.0;
  if (hi >= 1e60) {
    out.n0 = kPosInf;
  } else {
    for (int it = 0; it < 200 && (hi - lo) > 1e-6 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (max_delta_at(mid) > slack_at(mid) ? lo : hi) = mid;
    }
    out.n0 = hi;
  }

  double shifted = rate - out.slack;
  if (shifted < 0.0) {
    out.vacuous = true;
    return out;
  }
  SpeResult spe = sphere_packing_exponent(ctx, shifted);
  if (spe.infinite) {
    out.vacuous = true;
    return out;
  }
  out.value = std::clamp(std::exp(-n * (spe.value + out.slack)), 0.0, 1.0);
  return out;
}

void write_spe_csv(std::ostream& out, const std::vector<SpeResult>& results) {
  out << "rate,e_sp,achieving_order,infinite\n";
  for (const SpeResult& r : results) {
    out << fmt12(r.rate_nats) << ',' << fmt12(r.value) << ',';
    if (r.achieving_order) out << fmt12(*r.achieving_order);
    out << ',' << (r.infinite ? 1 : 0) << '\n';
  }
}

void write_bound_csv(std::ostream& out, const std::vector<SpbParameters>& params,
                     const std::vector<SpbBound>& bounds) {
  out << "n,delta1,delta2,bound,vacuous\n";
  for (size_t i = 0; i < params.size(); ++i) {
    out << fmt12(params[i].n) << ',' << fmt12(params[i].delta1) << ','
        << fmt12(params[i].delta2) << ',' << fmt12(bounds[i].value) << ','
        << (bounds[i].vacuous ? 1 : 0) << '\n';
  }
}

}  // namespace spb
