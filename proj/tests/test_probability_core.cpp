#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spb/channel_io.hpp"
#include "spb/pmf.hpp"

using namespace spb;

namespace {

Pmf random_pmf(std::mt19937_64& rng, int n, bool allow_zero = false) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  double total = 0.0;
  for (double& x : v) {
    x = d(rng);
    if (allow_zero && d(rng) < 0.2) x = 0.0;
    total += x;
  }
  if (total == 0.0) v[0] = total = 1.0;
  for (double& x : v) x /= total;
  return Pmf::validated(std::move(v), /*renormalize=*/true);
}

}  // namespace

TEST_CASE("pmf validation") {
  CHECK_THROWS_AS(Pmf::validated({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(Pmf::validated({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(Pmf::validated({}), std::invalid_argument);
  Pmf p = Pmf::validated({0.25, 0.5, 0.25});
  CHECK(p.size() == 3);
  // renormalization absorbs text rounding
  Pmf q = Pmf::validated({0.3, 0.3, 0.3}, true);
  CHECK(q[0] == doctest::Approx(1.0 / 3));
}

TEST_CASE("total variation hand values") {
  CHECK(total_variation(Pmf::validated({1, 0}), Pmf::validated({1, 0})) == 0.0);
  CHECK(total_variation(Pmf::validated({1, 0}), Pmf::validated({0, 1})) == 2.0);
  // |0.5-0.9| + |0.5-0.1| = 0.8
  CHECK(total_variation(Pmf::validated({0.5, 0.5}), Pmf::validated({0.9, 0.1})) ==
        doctest::Approx(0.8));
  CHECK_THROWS_AS(total_variation(Pmf::validated({1, 0}), Pmf::validated({1, 0, 0})),
                  std::invalid_argument);
}

TEST_CASE("renyi divergence special values") {
  Pmf w = Pmf::validated({0.3, 0.7});
  CHECK(renyi_divergence(0.5, w, w) == doctest::Approx(0.0));
  // point mass vs uniform at order 1/2: (1/(-1/2)) ln sqrt(1/2) = ln 2
  CHECK(renyi_divergence(0.5, Pmf::validated({1, 0}), Pmf::validated({0.5, 0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // order-1 sum evaluated directly
  double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(renyi_divergence(1.0, Pmf::validated({0.5, 0.5}), Pmf::validated({0.25, 0.75})) ==
        doctest::Approx(expected).epsilon(1e-14));
  // infinite when order-1 mass escapes the support
  CHECK(renyi_divergence(1.0, Pmf::validated({0.5, 0.5}), Pmf::validated({1, 0})) == kPosInf);
  // order < 1 stays finite with partial support overlap
  CHECK(std::isfinite(renyi_divergence(0.5, Pmf::validated({0.5, 0.5}), Pmf::validated({1, 0}))));
  // disjoint supports are infinite at every order
  CHECK(renyi_divergence(0.5, Pmf::validated({1, 0}), Pmf::validated({0, 1})) == kPosInf);
  CHECK_THROWS_AS(renyi_divergence(1.5, w, w), std::invalid_argument);
  CHECK_THROWS_AS(renyi_divergence(0.0, w, w), std::invalid_argument);
}

TEST_CASE("divergence monotone in order, Pinsker, skew symmetry, non-negativity") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> du(0.01, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 2 + static_cast<int>(rng() % 5);
    Pmf w = random_pmf(rng, n, true);
    Pmf q = random_pmf(rng, n);
    double a = du(rng), b = du(rng);
    if (a > b) std::swap(a, b);
    double da = renyi_divergence(a, w, q);
    double db = renyi_divergence(b, w, q);
    CHECK(da >= 0.0);
    CHECK(da <= db + 1e-12);
    CHECK(da >= 0.5 * a * total_variation(w, q) * total_variation(w, q) - 1e-12);
    if (a < 1.0) {
      double lhs = (1.0 - a) / a * renyi_divergence(a, w, q);
      double rhs = renyi_divergence(1.0 - a, q, w);
      if (std::isfinite(lhs) && std::isfinite(rhs))
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
}

TEST_CASE("channel file round trip and diagnostics") {
  Dmc w = Dmc::bsc(0.1);
  std::stringstream ss;
  write_channel(ss, w);
  Dmc back = read_channel(ss);
  CHECK(back.input_size() == 2);
  CHECK(back.row(0)[1] == doctest::Approx(0.1));

  std::stringstream good("# comment line\ndmc 2 2\n0.9 0.1\n0.1 0.9 # trailing\n");
  CHECK(read_channel(good).digest() == w.digest());

  std::stringstream bad1("dmx 2 2\n1 0\n0 1\n");
  CHECK_THROWS_AS(read_channel(bad1), parse_error);
  std::stringstream bad2("dmc 2 2\n0.9 0.1\n0.1\n");
  CHECK_THROWS_AS(read_channel(bad2), parse_error);
  std::stringstream bad3("dmc 2 2\n0.9 x\n0.1 0.9\n");
  try {
    read_channel(bad3);
    CHECK(false);
  } catch (const parse_error& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 5);
  }
  std::stringstream bad4("dmc 2 2\n0.9 0.1\n0.1 0.9\nstray\n");
  CHECK_THROWS_AS(read_channel(bad4), parse_error);
}

TEST_CASE("dmc accessors") {
  Dmc w = Dmc::validated(2, 3, {0.2, 0.3, 0.5, 1.0, 0.0, 0.0});
  CHECK(w.input_size() == 2);
  CHECK(w.output_size() == 3);
  CHECK(w.row_pmf(1)[0] == 1.0);
  CHECK(w.digest() != Dmc::bsc(0.1).digest());
  CHECK_THROWS_AS(Dmc::validated(2, 2, {1, 0, 0}), std::invalid_argument);
}
