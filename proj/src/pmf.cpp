#include "spb/pmf.hpp"

#include <cmath>
#include <stdexcept>

#include "spb/kernels.hpp"

namespace spb {

namespace {
constexpr double kPmfTol = 1e-12;
}

Pmf Pmf::validated(std::vector<double> p, bool renormalize) {
  if (p.empty()) throw std::invalid_argument("pmf: empty alphabet");
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("pmf: negative or NaN entry");
  }
  double total = kernels::sum(p);
  if (renormalize) {
    if (total <= 0.0) throw std::invalid_argument("pmf: non-positive total");
    for (double& v : p) v /= total;
    total = kernels::sum(p);
  }
  if (std::abs(total - 1.0) > kPmfTol)
    throw std::invalid_argument("pmf: entries sum to " + fmt12(total) + ", not 1");
  return Pmf(std::move(p));
}

Pmf Pmf::uniform(size_t n) {
  if (n == 0) throw std::invalid_argument("pmf: empty alphabet");
  return Pmf(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Pmf Pmf::point_mass(size_t n, size_t index) {
  if (index >= n) throw std::invalid_argument("pmf: point mass index out of range");
  std::vector<double> p(n, 0.0);
  p[index] = 1.0;
  return Pmf(std::move(p));
}

Dmc Dmc::from_rows(std::vector<Pmf> rows) {
  if (rows.empty()) throw std::invalid_argument("dmc: no rows");
  size_t out = rows.front().size();
  std::vector<double> w;
  w.reserve(rows.size() * out);
  for (const Pmf& r : rows) {
    if (r.size() != out) throw std::invalid_argument("dmc: ragged rows");
    w.insert(w.end(), r.probs().begin(), r.probs().end());
  }
  return Dmc(static_cast<int>(rows.size()), static_cast<int>(out), std::move(w));
}

Dmc Dmc::validated(int input_size, int output_size, std::vector<double> w, bool renormalize) {
  if (input_size < 1 || output_size < 1)
    throw std::invalid_argument("dmc: sizes must be positive");
  if (w.size() != static_cast<size_t>(input_size) * output_size)
    throw std::invalid_argument("dmc: entry count does not match dimensions");
  std::vector<Pmf> rows;
  rows.reserve(input_size);
  for (int x = 0; x < input_size; ++x) {
    std::vector<double> r(w.begin() + static_cast<size_t>(x) * output_size,
                          w.begin() + static_cast<size_t>(x + 1) * output_size);
    rows.push_back(Pmf::validated(std::move(r), renormalize));
  }
  return from_rows(std::move(rows));
}

Dmc Dmc::bsc(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bsc: p outside [0,1]");
  return Dmc(2, 2, {1.0 - p, p, p, 1.0 - p});
}

Pmf Dmc::row_pmf(int x) const {
  auto r = row(x);
  return Pmf::trusted(std::vector<double>(r.begin(), r.end()));
}

uint64_t Dmc::digest() const {
  uint64_t h = fnv1a(&in_, sizeof(in_));
  h = fnv1a(&out_, sizeof(out_), h);
  return fnv1a(w_.data(), w_.size() * sizeof(double), h);
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("total_variation: alphabet mismatch");
  return kernels::l1_dist(a, b);
}

double total_variation(const Pmf& a, const Pmf& b) {
  return total_variation(a.probs(), b.probs());
}

double kl_divergence(std::span<const double> w, std::span<const double> q) {
  if (w.size() != q.size()) throw std::invalid_argument("kl_divergence: alphabet mismatch");
  double s = 0.0, c = 0.0;
  for (size_t y = 0; y < w.size(); ++y) {
    if (w[y] == 0.0) continue;
    if (q[y] == 0.0) return kPosInf;
    double term = w[y] * (std::log(w[y]) - std::log(q[y]));
    double t = s + term;
    c += std::abs(s) >= std::abs(term) ? (s - t) + term : (term - t) + s;
    s = t;
  }
  return s + c;
}

double renyi_divergence(double order, std::span<const double> w, std::span<const double> q) {
  if (w.size() != q.size()) throw std::invalid_argument("renyi_divergence: alphabet mismatch");
  if (!(order > 0.0 && order <= 1.0))
    throw std::invalid_argument("renyi_divergence: order outside (0,1]");
  if (order == 1.0) return kl_divergence(w, q);
  // log-domain evaluation of (1/(order-1)) ln sum w^a q^(1-a); terms with a
  // zero factor vanish for order < 1.
  std::vector<double> terms;
  terms.reserve(w.size());
  for (size_t y = 0; y < w.size(); ++y) {
    if (w[y] == 0.0 || q[y] == 0.0) continue;
    terms.push_back(order * std::log(w[y]) + (1.0 - order) * std::log(q[y]));
  }
  if (terms.empty()) return kPosInf;  // disjoint supports
  double lse = log_sum_exp(terms);
  double d = lse / (order - 1.0);
  return d < 0.0 ? 0.0 : d;  // clip -1ulp noise at w == q
}

double renyi_divergence(double order, const Pmf& w, const Pmf& q) {
  return renyi_divergence(order, w.probs(), q.probs());
}

}  // namespace spb
