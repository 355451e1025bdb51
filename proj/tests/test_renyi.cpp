#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spb/renyi.hpp"

using namespace spb;

namespace {

// Closed-form order-a capacity of a binary symmetric channel; the oracle for
// the whole module.
double bsc_capacity(double p, double order) {
  if (order == 1.0) {
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return std::log(2.0) - h;
  }
  return std::log(2.0) -
         std::log(std::pow(p, order) + std::pow(1.0 - p, order)) / (1.0 - order);
}

Pmf random_pmf(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  std::vector<double> v(n);
  double total = 0.0;
  for (double& x : v) total += (x = d(rng));
  for (double& x : v) x /= total;
  return Pmf::validated(std::move(v), true);
}

Dmc random_channel(std::mt19937_64& rng, int nx, int ny) {
  std::vector<Pmf> rows;
  for (int x = 0; x < nx; ++x) rows.push_back(random_pmf(rng, ny));
  return Dmc::from_rows(std::move(rows));
}

Dmc identical_rows(int nx, const Pmf& row) {
  std::vector<Pmf> rows(nx, row);
  return Dmc::from_rows(std::move(rows));
}

Dmc identity_channel(int n) {
  std::vector<Pmf> rows;
  for (int i = 0; i < n; ++i) rows.push_back(Pmf::point_mass(n, i));
  return Dmc::from_rows(std::move(rows));
}

}  // namespace

TEST_CASE("renyi information closed forms") {
  std::mt19937_64 rng(1);
  Dmc flat = identical_rows(3, Pmf::validated({0.2, 0.3, 0.5}, true));
  CHECK(renyi_information(0.37, random_pmf(rng, 3), flat) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(renyi_information(0.5, Pmf::uniform(2), identity_channel(2)) ==
        doctest::Approx(std::log(2.0)));
  // mutual information of a BSC under the uniform prior
  double expected = std::log(2.0) + 0.1 * std::log(0.1) + 0.9 * std::log(0.9);
  CHECK(renyi_information(1.0, Pmf::uniform(2), Dmc::bsc(0.1)) == doctest::Approx(expected));
  CHECK_THROWS_AS(renyi_information(0.5, Pmf::uniform(3), Dmc::bsc(0.1)),
                  std::invalid_argument);
}

TEST_CASE("renyi mean special cases") {
  Dmc w = Dmc::bsc(0.2);
  // order 1 gives the exact output marginal
  Pmf prior = Pmf::validated({0.3, 0.7});
  Pmf mean = renyi_mean(1.0, prior, w);
  CHECK(mean[0] == doctest::Approx(0.3 * 0.8 + 0.7 * 0.2));
  // symmetry forces uniform
  Pmf u = renyi_mean(0.5, Pmf::uniform(2), identity_channel(2));
  CHECK(u[0] == doctest::Approx(0.5));
  // a point-mass prior reproduces the row at any order
  Pmf row = renyi_mean(0.5, Pmf::point_mass(2, 0), w);
  CHECK(row[0] == doctest::Approx(0.8));
  CHECK(row[1] == doctest::Approx(0.2));
}

TEST_CASE("gallager function is the reparameterized information") {
  std::mt19937_64 rng(3);
  CHECK(gallager_e0(1.0, Pmf::uniform(2), identity_channel(2)) ==
        doctest::Approx(std::log(2.0)));
  Dmc flat = identical_rows(2, Pmf::validated({0.4, 0.6}, true));
  CHECK(gallager_e0(0.7, Pmf::uniform(2), flat) == doctest::Approx(0.0).epsilon(1e-12));
  // cross-check against the direct exponent sum -ln sum_y (sum_x P W^(1/(1+s)))^(1+s)
  for (int trial = 0; trial < 20; ++trial) {
    Dmc w = random_channel(rng, 3, 4);
    Pmf prior = random_pmf(rng, 3);
    double s = 0.1 + 2.0 * (trial / 20.0);
    double direct = 0.0;
    {
      double outer = 0.0;
      for (int y = 0; y < 4; ++y) {
        double inner = 0.0;
        for (int x = 0; x < 3; ++x) inner += prior[x] * std::pow(w.row(x)[y], 1.0 / (1.0 + s));
        outer += std::pow(inner, 1.0 + s);
      }
      direct = -std::log(outer);
    }
    CHECK(gallager_e0(s, prior, w) == doctest::Approx(direct).epsilon(1e-10));
  }
  CHECK_THROWS_AS(gallager_e0(0.0, Pmf::uniform(2), flat), std::invalid_argument);
}

TEST_CASE("capacity matches the closed form on symmetric channels") {
  for (double p : {0.05, 0.1, 0.2}) {
    Dmc w = Dmc::bsc(p);
    for (double a : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      CapacityResult r = renyi_capacity(a, w, 1e-11);
      CHECK(r.converged);
      CHECK(r.capacity_nats == doctest::Approx(bsc_capacity(p, a)).epsilon(1e-9));
      CHECK(total_variation(r.center, Pmf::uniform(2)) < 1e-8);
      CHECK(r.residual <= 1e-11);
    }
  }
}

TEST_CASE("capacity trivia: identity and identical-row channels") {
  for (double a : {0.2, 0.5, 1.0}) {
    CapacityResult r = renyi_capacity(a, identity_channel(3), 1e-11);
    CHECK(r.capacity_nats == doctest::Approx(std::log(3.0)).epsilon(1e-10));
    CHECK(total_variation(r.center, Pmf::uniform(3)) < 1e-9);
    CapacityResult flat = renyi_capacity(a, identical_rows(4, Pmf::validated({0.7, 0.3})), 1e-11);
    CHECK(flat.capacity_nats == doctest::Approx(0.0).epsilon(1e-11));
  }
}

TEST_CASE("capacity against a brute-force prior grid on a 2x2 asymmetric channel") {
  Dmc w = Dmc::validated(2, 2, {0.9, 0.1, 0.3, 0.7});
  for (double a : {0.3, 0.6, 1.0}) {
    double best = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      Pmf prior = Pmf::validated({i / 1000.0, 1.0 - i / 1000.0}, true);
      best = std::max(best, renyi_information(a, prior, w));
    }
    CapacityResult r = renyi_capacity(a, w, 1e-11);
    CHECK(r.capacity_nats >= best - 1e-9);
    CHECK(r.capacity_nats <= best + 1e-5);  // grid resolution limits the upper side
  }
}

TEST_CASE("sibson identity on random instances") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> du(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    int nx = 2 + static_cast<int>(rng() % 5), ny = 2 + static_cast<int>(rng() % 5);
    Dmc w = random_channel(rng, nx, ny);
    Pmf prior = random_pmf(rng, nx);
    Pmf q = random_pmf(rng, ny);
    double a = du(rng);
    // joint pmfs on the product alphabet
    std::vector<double> joint(nx * ny), prod(nx * ny);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y) {
        joint[x * ny + y] = prior[x] * w.row(x)[y];
        prod[x * ny + y] = prior[x] * q[y];
      }
    double lhs = renyi_divergence(a, Pmf::validated(joint, true), Pmf::validated(prod, true));
    double rhs = renyi_information(a, prior, w) + renyi_divergence(a, renyi_mean(a, prior, w), q);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("saddle point property of the solved center") {
  std::mt19937_64 rng(5);
  Dmc w = random_channel(rng, 4, 3);
  for (double a : {0.25, 0.8, 1.0}) {
    CapacityResult r = renyi_capacity(a, w, 1e-11);
    double maxdiv = 0.0;
    for (int x = 0; x < 4; ++x)
      maxdiv = std::max(maxdiv, renyi_divergence(a, w.row_pmf(x), r.center));
    CHECK(maxdiv <= r.capacity_nats + 1e-10);
    for (int trial = 0; trial < 50; ++trial) {
      Pmf q = random_pmf(rng, 3);
      double challenger = 0.0;
      for (int x = 0; x < 4; ++x)
        challenger = std::max(challenger, renyi_divergence(a, w.row_pmf(x), q));
      CHECK(challenger >= r.capacity_nats - 1e-10);
    }
  }
}

TEST_CASE("capacity monotone in order and the scaled form nonincreasing") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Dmc w = random_channel(rng, 3, 3);
    std::vector<double> orders{0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95, 1.0};
    std::vector<CapacityResult> rs = capacity_sweep(w, orders, 1e-11);
    for (size_t i = 1; i < rs.size(); ++i) {
      CHECK(rs[i].capacity_nats >= rs[i - 1].capacity_nats - 1e-10);
      if (orders[i] < 1.0) {
        double prev = (1.0 - orders[i - 1]) / orders[i - 1] * rs[i - 1].capacity_nats;
        double cur = (1.0 - orders[i]) / orders[i] * rs[i].capacity_nats;
        CHECK(cur <= prev + 1e-10);
      }
      // scaled order-1/2 dominance
      if (orders[i] < 1.0) {
        double c_half = renyi_capacity(0.5, w, 1e-11).capacity_nats;
        CHECK(rs[i].capacity_nats <= c_half / (1.0 - orders[i]) + 1e-10);
      }
    }
  }
}

TEST_CASE("order-zero extension") {
  CHECK(capacity_order_zero(identity_channel(2), 1e-9) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-8));
  CHECK(capacity_order_zero(identical_rows(3, Pmf::validated({0.5, 0.5})), 1e-9) ==
        doctest::Approx(0.0).epsilon(1e-8));
  // both BSC rows share full support, so the limit is zero
  CHECK(capacity_order_zero(Dmc::bsc(0.1), 1e-9) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("center curve: symmetry, consistency, continuity modulus") {
  std::vector<double> orders{0.2, 0.4, 0.6, 0.8, 1.0};
  auto idc = center_curve(identity_channel(2), orders, 1e-11);
  for (const auto& r : idc) CHECK(total_variation(r.center, Pmf::uniform(2)) < 1e-9);
  auto bsc = center_curve(Dmc::bsc(0.15), orders, 1e-11);
  for (const auto& r : bsc) CHECK(total_variation(r.center, Pmf::uniform(2)) < 1e-8);

  std::vector<double> one{0.37};
  auto single = center_curve(Dmc::bsc(0.15), one, 1e-11);
  CapacityResult direct = renyi_capacity(0.37, Dmc::bsc(0.15), 1e-11);
  CHECK(total_variation(single[0].center, direct.center) < 1e-10);

  // ||q_a - q_b||_1^2 <= (2/a)(C_b - C_a) for a <= b
  std::mt19937_64 rng(21);
  Dmc w = random_channel(rng, 3, 4);
  auto curve = center_curve(w, orders, 1e-11);
  for (size_t i = 1; i < curve.size(); ++i) {
    double tv = total_variation(curve[i - 1].center, curve[i].center);
    double slack =
        2.0 / orders[i - 1] * (curve[i].capacity_nats - curve[i - 1].capacity_nats);
    CHECK(tv * tv <= slack + 1e-9);
  }
}

TEST_CASE("two solver starts agree on the center") {
  std::mt19937_64 rng(33);
  Dmc w = random_channel(rng, 4, 4);
  for (double a : {0.3, 0.7, 1.0}) {
    CapacitySolveOptions opt;
    opt.tol = 1e-11;
    CapacityResult r1 = renyi_capacity(a, w, opt);
    opt.start = Pmf::validated({0.55, 0.2, 0.15, 0.1}, true);
    CapacityResult r2 = renyi_capacity(a, w, opt);
    CHECK(total_variation(r1.center, r2.center) < 10 * 1e-11 + 1e-10);
    CHECK(r1.capacity_nats == doctest::Approx(r2.capacity_nats).epsilon(1e-10));
  }
}

TEST_CASE("capacity cache returns identical results") {
  CapacityCache cache(1e-10);
  Dmc w = Dmc::bsc(0.1);
  const CapacityResult& a = cache.get(w, 0.5);
  const CapacityResult& b = cache.get(w, 0.5);
  CHECK(&a == &b);
  CHECK(a.capacity_nats == doctest::Approx(bsc_capacity(0.1, 0.5)).epsilon(1e-9));
}

TEST_CASE("capacity csv emitter") {
  std::vector<double> orders{0.5, 1.0};
  auto rs = center_curve(Dmc::bsc(0.1), orders, 1e-10);
  std::stringstream ss;
  write_capacity_csv(ss, Dmc::bsc(0.1), rs);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "order,capacity_nats,residual,center_0,center_1");
  std::getline(ss, line);
  CHECK(line.substr(0, 4) == "0.5,");
}
