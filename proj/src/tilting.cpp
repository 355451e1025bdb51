#include "spb/tilting.hpp"

#include <cmath>

#include "spb/kernels.hpp"

namespace spb {

TiltedPmf tilt_pmf(double order, const Pmf& w, const Pmf& q) {
  if (!(order > 0.0 && order <= 1.0))
    throw std::invalid_argument("tilt_pmf: order outside (0,1]");
  if (w.size() != q.size()) throw std::invalid_argument("tilt_pmf: alphabet mismatch");
  double d = renyi_divergence(order, w, q);
  if (d == kPosInf) throw std::invalid_argument("tilt_pmf: divergence is infinite");

  TiltedPmf out;
  out.base_w = w;
  out.base_q = q;
  out.order = order;
  out.divergence_at_order = d;
  if (order == 1.0) {
    out.tilted = w;
    return out;
  }
  std::vector<double> t(w.size(), 0.0);
  double log_scale = (1.0 - order) * d;
  for (size_t y = 0; y < w.size(); ++y) {
    if (w[y] == 0.0 || q[y] == 0.0) continue;
    t[y] = std::exp(log_scale + order * std::log(w[y]) + (1.0 - order) * std::log(q[y]));
  }
  // The prefactor is exactly the normalizer; scrub the residual rounding so
  // the result satisfies the pmf invariants.
  double total = kernels::sum(t);
  for (double& v : t) v /= total;
  out.tilted = Pmf::trusted(std::move(t));
  return out;
}

Dmc selftilt_channel(double order, const Dmc& w, CapacityCache& cache) {
  if (!(order > 0.0 && order <= 1.0))
    throw std::invalid_argument("selftilt_channel: order outside (0,1]");
  if (order == 1.0) return w;
  const CapacityResult& cap = cache.get(w, order);
  std::vector<Pmf> rows;
  rows.reserve(w.input_size());
  for (int x = 0; x < w.input_size(); ++x)
    rows.push_back(tilt_pmf(order, w.row_pmf(x), cap.center).tilted);
  return Dmc::from_rows(std::move(rows));
}

Dmc selftilt_channel(double order, const Dmc& w, double tol) {
  CapacityCache cache(tol);
  return selftilt_channel(order, w, cache);
}

double tilted_kld_residual(double order, const Pmf& w, const Pmf& q) {
  TiltedPmf t = tilt_pmf(order, w, q);
  double dw = kl_divergence(t.tilted.probs(), w.probs());
  double dq = kl_divergence(t.tilted.probs(), q.probs());
  return order * dw + (1.0 - order) * dq - (1.0 - order) * t.divergence_at_order;
}

SecondMomentCheck second_moment_check(double order, const Pmf& w, const Pmf& q) {
  TiltedPmf t = tilt_pmf(order, w, q);
  double d = t.divergence_at_order;
  SecondMomentCheck out{};
  double sw = 0.0, sq = 0.0;
  for (size_t y = 0; y < w.size(); ++y) {
    double ty = t.tilted[y];
    if (ty == 0.0) continue;
    double lw = std::log(ty) - std::log(w[y]);
    double lq = std::log(ty) - std::log(q[y]);
    sw += ty * lw * lw;
    sq += ty * lq * lq;
  }
  const double e2 = std::exp(-2.0);
  double ratio = (1.0 - order) / order;
  out.lhs_w = sw;
  out.rhs_w = 4.0 * e2 + ratio * ratio * (4.0 + d * d);
  out.lhs_q = sq;
  out.rhs_q = 4.0 * e2 + 4.0 / (ratio * ratio) + d * d;
  return out;
}

}  // namespace spb
