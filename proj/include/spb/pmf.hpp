#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spb/util.hpp"

namespace spb {

/// Probability mass function over a finite alphabet. Immutable after
/// construction; entries are non-negative and sum to 1 within 1e-12.
class Pmf {
 public:
  Pmf() = default;

  /// Validates entries (>= 0, sum within 1e-12 of 1). With renormalize set,
  /// a positive vector with any sum is scaled to total 1 first; text inputs
  /// carry rounding, so ingestion paths pass renormalize = true.
  static Pmf validated(std::vector<double> p, bool renormalize = false);

  /// No validation; for internal construction of exactly-normalized vectors.
  static Pmf trusted(std::vector<double> p) { return Pmf(std::move(p)); }

  static Pmf uniform(size_t n);
  static Pmf point_mass(size_t n, size_t index);

  size_t size() const { return p_.size(); }
  double operator[](size_t i) const { return p_[i]; }
  std::span<const double> probs() const { return p_; }

  bool operator==(const Pmf& o) const { return p_ == o.p_; }

 private:
  explicit Pmf(std::vector<double> p) : p_(std::move(p)) {}
  std::vector<double> p_;
};

/// Stochastic matrix: one output pmf per input symbol. Rows are stored
/// row-major; immutable after construction.
class Dmc {
 public:
  Dmc() = default;

  static Dmc from_rows(std::vector<Pmf> rows);
  /// Parses a flat row-major vector; validates every row.
  static Dmc validated(int input_size, int output_size, std::vector<double> w,
                       bool renormalize = false);
  /// Binary symmetric channel with crossover probability p.
  static Dmc bsc(double p);

  int input_size() const { return in_; }
  int output_size() const { return out_; }
  std::span<const double> row(int x) const {
    return {w_.data() + static_cast<size_t>(x) * out_, static_cast<size_t>(out_)};
  }
  Pmf row_pmf(int x) const;
  std::span<const double> flat() const { return w_; }

  /// FNV-1a digest of dimensions and entries; key for capacity/center caches.
  uint64_t digest() const;

 private:
  Dmc(int in, int out, std::vector<double> w) : in_(in), out_(out), w_(std::move(w)) {}
  int in_ = 0;
  int out_ = 0;
  std::vector<double> w_;
};

/// Total variation distance sum_y |a(y) - b(y)|, in [0, 2].
double total_variation(const Pmf& a, const Pmf& b);
double total_variation(std::span<const double> a, std::span<const double> b);

/// Renyi divergence of order in (0,1] between pmfs on a common alphabet.
/// Order 1 is the KL divergence with the 0 ln(0/q) = 0 convention; it is
/// +inf when w has mass where q has none. For order < 1 the terms with
/// w(y) = 0 or q(y) = 0 drop out of the defining sum.
double renyi_divergence(double order, const Pmf& w, const Pmf& q);
double renyi_divergence(double order, std::span<const double> w, std::span<const double> q);

/// KL divergence, identical to renyi_divergence at order 1.
double kl_divergence(std::span<const double> w, std::span<const double> q);

}  // namespace spb
