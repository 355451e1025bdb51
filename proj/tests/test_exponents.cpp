#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spb/exponents.hpp"

using namespace spb;

namespace {

double bsc_capacity(double p, double order) {
  if (order == 1.0) {
    double h = -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
    return std::log(2.0) - h;
  }
  return std::log(2.0) -
         std::log(std::pow(p, order) + std::pow(1.0 - p, order)) / (1.0 - order);
}

// Dense-grid supremum over the order using the closed-form capacity; the
// independent oracle for the BSC exponent values.
double bsc_spe_oracle(double p, double rate, int grid = 100000) {
  double best = 0.0;
  for (int i = 1; i < grid; ++i) {
    double a = static_cast<double>(i) / grid;
    best = std::max(best, (1.0 - a) / a * (bsc_capacity(p, a) - rate));
  }
  return best;
}

Dmc random_channel(std::mt19937_64& rng, int nx, int ny) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  std::vector<double> w(static_cast<size_t>(nx) * ny);
  for (double& x : w) x = d(rng);
  return Dmc::validated(nx, ny, std::move(w), true);
}

Dmc identity2() { return Dmc::validated(2, 2, {1, 0, 0, 1}); }

}  // namespace

TEST_CASE("sphere packing exponent on the BSC against the dense oracle") {
  ExponentContext ctx(Dmc::bsc(0.1), 1e-10);
  CHECK(ctx.c1() == doctest::Approx(bsc_capacity(0.1, 1.0)).epsilon(1e-9));
  CHECK(ctx.c0() == doctest::Approx(0.0).epsilon(1e-6));
  for (double rate : {0.05, 0.1, 0.2, 0.3}) {
    SpeResult r = sphere_packing_exponent(ctx, rate);
    CHECK_FALSE(r.infinite);
    CHECK(r.value == doctest::Approx(bsc_spe_oracle(0.1, rate)).epsilon(1e-6));
  }
  // zero at and above the order-1 capacity
  CHECK(sphere_packing_exponent(ctx, ctx.c1()).value == 0.0);
  CHECK(sphere_packing_exponent(ctx, 0.7).value == 0.0);
}

TEST_CASE("exponent is infinite below the order-0 capacity") {
  ExponentContext ctx(identity2(), 1e-10);
  CHECK(ctx.c0() == doctest::Approx(std::log(2.0)).epsilon(1e-8));
  SpeResult r = sphere_packing_exponent(ctx, 0.5 * std::log(2.0));
  CHECK(r.infinite);
  CHECK(r.value == kPosInf);
  CHECK(sphere_packing_exponent(ctx, std::log(2.0)).value == 0.0);
}

TEST_CASE("exponent curve: nonincreasing and midpoint convex") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    Dmc w = random_channel(rng, 3, 3);
    ExponentContext ctx(w, 1e-10);
    double lo = ctx.c0() + 0.15 * (ctx.c1() - ctx.c0());
    double hi = ctx.c1() - 0.05 * (ctx.c1() - ctx.c0());
    std::vector<double> rates, values;
    for (int i = 0; i <= 8; ++i) {
      double r = lo + (hi - lo) * i / 8.0;
      rates.push_back(r);
      values.push_back(sphere_packing_exponent(ctx, r).value);
    }
    for (size_t i = 1; i < values.size(); ++i) CHECK(values[i] <= values[i - 1] + 1e-9);
    for (size_t i = 2; i < values.size(); ++i)
      CHECK(values[i - 1] <= 0.5 * (values[i] + values[i - 2]) + 1e-8);
  }
}

TEST_CASE("order finding solves its defining equations") {
  for (double p : {0.1, 0.2}) {
    Dmc w = Dmc::bsc(p);
    ExponentContext ctx(w, 1e-10);
    for (int i = 1; i <= 10; ++i) {
      double rate = ctx.c0() + (ctx.c1() - ctx.c0()) * i / 11.0;
      double rho1 = find_order_for_rate(ctx, rate, 1e-10);
      CHECK(std::abs(bsc_capacity(p, rho1) - rate) < 1e-8);
      double rho2 = find_order_for_spe(ctx, rate, 1e-10);
      double target = sphere_packing_exponent(ctx, rate).value;
      CHECK(std::abs((1.0 - rho2) / rho2 * bsc_capacity(p, rho2) - target) < 1e-8);
      CHECK(rho2 > rho1);
      CHECK(rho2 < 1.0);
    }
  }
  // fixed point: the rate C_(1/2) maps back to order 1/2
  ExponentContext ctx(Dmc::bsc(0.1), 1e-10);
  CHECK(find_order_for_rate(ctx, bsc_capacity(0.1, 0.5), 1e-10) ==
        doctest::Approx(0.5).epsilon(1e-7));
  // degenerate channel rejects every rate
  ExponentContext idctx(identity2(), 1e-10);
  CHECK_THROWS_AS(find_order_for_rate(idctx, 0.3, 1e-10), std::invalid_argument);
  CHECK_THROWS_AS(find_order_for_spe(idctx, 0.3, 1e-10), std::invalid_argument);
}

TEST_CASE("bound constants match a literal re-evaluation of the formulas") {
  Dmc w = Dmc::bsc(0.1);
  ExponentContext ctx(w, 1e-10);
  double rate0 = 0.08, rate1 = 0.3, rate = 0.15;
  double n = 1e6, k = 1e4, eps = 1e-6;
  SpbParameters p = spb_constants(ctx, n, k, eps, rate0, rate1, rate, 1e-10);
  // independent evaluation, written out term by term
  double d1 = std::log(4.0) / n +
              8.0 * (2.0 + p.c_half) / ((1.0 - p.rho2) * std::sqrt(k)) +
              k / n * std::log(n + 1.0 / eps);
  double d2 = std::log(4.0) / n + 8.0 * (2.0 + p.c_half) / (p.rho1 * std::sqrt(k)) +
              k * std::log(n) / n + 2.0 * rate * eps / (p.rho1 * p.rho1);
  CHECK(p.delta1 == doctest::Approx(d1).epsilon(1e-12));
  CHECK(p.delta2 == doctest::Approx(d2).epsilon(1e-12));
  CHECK(p.c_half == doctest::Approx(bsc_capacity(0.1, 0.5)).epsilon(1e-9));
  CHECK_FALSE(p.rate_window_ok);  // delta1 is huge at this n

  // structural violations are hard errors
  CHECK_THROWS_AS(spb_constants(ctx, 10, 20, eps, rate0, rate1, rate, 1e-10),
                  std::invalid_argument);
  CHECK_THROWS_AS(spb_constants(ctx, n, k, 0.4, rate0, rate1, rate, 1e-10),
                  std::invalid_argument);
  // n = k makes delta1 at least ln(n + 1/eps), swamping any small-channel rate
  SpbParameters tight = spb_constants(ctx, 32, 32, 1e-3, rate0, rate1, rate, 1e-10);
  CHECK(tight.delta1 >= std::log(32 + 1e3));
  CHECK_FALSE(tight.rate_window_ok);
}

TEST_CASE("delta terms shrink with n and grow with k") {
  Dmc w = Dmc::bsc(0.1);
  ExponentContext ctx(w, 1e-10);
  SpbParameters a = spb_constants(ctx, 1e6, 1e4, 1e-6, 0.08, 0.3, 0.15, 1e-10);
  SpbParameters b = spb_constants(ctx, 4e6, 4e4, 1e-6, 0.08, 0.3, 0.15, 1e-10);  // same k/n
  CHECK(b.delta1 < a.delta1);
  CHECK(b.delta2 < a.delta2);
  SpbParameters c = spb_constants(ctx, 1e6, 4e4, 1e-6, 0.08, 0.3, 0.15, 1e-10);
  CHECK(c.delta1 > a.delta1);
  CHECK(c.delta2 > a.delta2);
}

TEST_CASE("lower bound evaluation and clamping") {
  Dmc w = Dmc::bsc(0.1);
  ExponentContext ctx(w, 1e-10);
  SpbParameters p = spb_constants(ctx, 1e6, 1e4, 1e-6, 0.08, 0.3, 0.15, 1e-10);
  SpbBound b = spb_lower_bound(ctx, p);
  // delta1 ~ 0.5 pushes the shifted rate below the order-0 capacity
  CHECK(b.vacuous);
  CHECK(b.value == 0.0);

  // artificial small deltas: value must match the direct formula
  p.delta1 = 0.01;
  p.delta2 = 0.02;
  SpbBound b2 = spb_lower_bound(ctx, p);
  CHECK_FALSE(b2.vacuous);
  double esp = sphere_packing_exponent(ctx, p.rate - 0.01).value;
  CHECK(b2.value == doctest::Approx(std::exp(-p.n * (esp + 0.02))));

  // zero exponent clamps at one
  p.delta1 = 0.0;
  p.delta2 = 0.0;
  p.rate = ctx.c1() + 0.01;
  SpbBound b3 = spb_lower_bound(ctx, p);
  CHECK(b3.value == doctest::Approx(1.0));
}

TEST_CASE("asymptotic bound and the crossover block length") {
  Dmc w = Dmc::bsc(0.1);
  ExponentContext ctx(w, 1e-10);
  double rate = 0.15;
  AsymptoticBound prev{};
  double prev_max_delta = kPosInf;
  for (double n : {1e3, 1e4, 1e5, 1e6}) {
    AsymptoticBound ab = asymptotic_bound(ctx, rate, n);
    CHECK(ab.max_delta < prev_max_delta);
    prev_max_delta = ab.max_delta;
    CHECK(ab.n0 > n);  // the crossover for this channel sits far beyond 1e6
    prev = ab;
  }
  // at the detected crossover the deltas drop below the slack and both
  // bound forms are comparable
  AsymptoticBound at0 = asymptotic_bound(ctx, rate, prev.n0);
  CHECK(at0.max_delta <= at0.slack * (1.0 + 1e-6));
  CHECK(at0.hypothesis_ok);
  for (double factor : {1.0, 2.0, 8.0}) {
    double n = prev.n0 * factor;
    AsymptoticBound ab = asymptotic_bound(ctx, rate, n);
    double span = ctx.c1() - ctx.c0();
    double eps_n = std::min(ab.rho1, 1.0 - ab.rho2) / n;
    SpbParameters p = spb_constants(ctx, n, std::floor(std::cbrt(n * n)), eps_n,
                                    ctx.c0() + 0.1 * span, ctx.c1() - 0.1 * span, rate, 1e-10);
    SpbBound lb = spb_lower_bound(ctx, p);
    CHECK_FALSE(ab.vacuous);
    CHECK(ab.value <= lb.value * (1.0 + 1e-9));
  }
}

TEST_CASE("csv emitters") {
  Dmc w = Dmc::bsc(0.1);
  ExponentContext ctx(w, 1e-10);
  std::vector<SpeResult> rs{sphere_packing_exponent(ctx, 0.1),
                            sphere_packing_exponent(ctx, 0.9)};
  std::stringstream ss;
  write_spe_csv(ss, rs);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "rate,e_sp,achieving_order,infinite");
}
