#include "spb/renyi.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "spb/kernels.hpp"

namespace spb {

namespace {

void check_order(double order) {
  if (!(order > 0.0 && order <= 1.0))
    throw std::invalid_argument("order outside (0,1]: " + fmt12(order));
}

void check_prior(const Prior& prior, const Dmc& w) {
  if (static_cast<int>(prior.size()) != w.input_size())
    throw std::invalid_argument("prior dimension does not match channel input size");
}

std::vector<double> log_of(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? std::log(v[i]) : kNegInf;
  return out;
}

// Shared per-iterate evaluation: center candidate, per-row divergences,
// information value. Everything is kept in the log domain so that tiny
// orders (the order-0 limit path) stay finite.
struct Iterate {
  std::vector<double> log_center;
  std::vector<double> divergence;  // D_order(W(x) || center)
  double info = 0.0;
  double max_div = 0.0;
  double gap() const { return max_div - info; }
};

struct Workspace {
  int X, Y;
  double order;
  std::vector<double> logw;        // ln W, row-major
  std::vector<double> logw_order;  // order * ln W
  std::vector<double> scratch;

  Workspace(const Dmc& w, double order_) : X(w.input_size()), Y(w.output_size()), order(order_) {
    logw = log_of(w.flat());
    logw_order.resize(logw.size());
    for (size_t i = 0; i < logw.size(); ++i)
      logw_order[i] = logw[i] == kNegInf ? kNegInf : order * logw[i];
    scratch.resize(std::max(X, Y));
  }

  void eval(std::span<const double> log_prior, Iterate& it) {
    it.log_center.assign(Y, kNegInf);
    it.divergence.assign(X, 0.0);
    if (order == 1.0) {
      // Output marginal, KL rows, mutual information.
      for (int y = 0; y < Y; ++y) {
        for (int x = 0; x < X; ++x)
          scratch[x] = log_prior[x] == kNegInf || logw[x * Y + y] == kNegInf
                           ? kNegInf
                           : log_prior[x] + logw[x * Y + y];
        it.log_center[y] = log_sum_exp({scratch.data(), static_cast<size_t>(X)});
      }
      double info = 0.0;
      for (int x = 0; x < X; ++x) {
        double d = 0.0;
        for (int y = 0; y < Y; ++y) {
          double lw = logw[x * Y + y];
          if (lw == kNegInf) continue;
          d += std::exp(lw) * (lw - it.log_center[y]);
        }
        it.divergence[x] = d < 0.0 ? 0.0 : d;
        if (log_prior[x] != kNegInf) info += std::exp(log_prior[x]) * it.divergence[x];
      }
      it.info = info;
    } else {
      // log phi_y = lse_x(log P + order log W); center = phi^(1/order)
      // normalized; information = order/(order-1) * log normalizer.
      std::vector<double> log_phi(Y, kNegInf);
      for (int y = 0; y < Y; ++y) {
        for (int x = 0; x < X; ++x)
          scratch[x] = log_prior[x] == kNegInf || logw_order[x * Y + y] == kNegInf
                           ? kNegInf
                           : log_prior[x] + logw_order[x * Y + y];
        log_phi[y] = log_sum_exp({scratch.data(), static_cast<size_t>(X)});
      }
      for (int y = 0; y < Y; ++y)
        it.log_center[y] = log_phi[y] == kNegInf ? kNegInf : log_phi[y] / order;
      double log_norm = log_sum_exp(it.log_center);
      for (double& v : it.log_center)
        if (v != kNegInf) v -= log_norm;
      it.info = order / (order - 1.0) * log_norm;
      if (it.info < 0.0 && it.info > -1e-13) it.info = 0.0;
      for (int x = 0; x < X; ++x) {
        // D_order(W(x) || center), log-domain.
        int terms = 0;
        for (int y = 0; y < Y; ++y) {
          double lwo = logw_order[x * Y + y];
          double lq = it.log_center[y];
          if (lwo == kNegInf || lq == kNegInf) continue;
          scratch[terms++] = lwo + (1.0 - order) * lq;
        }
        if (terms == 0) {
          it.divergence[x] = kPosInf;
          continue;
        }
        double d = log_sum_exp({scratch.data(), static_cast<size_t>(terms)}) / (order - 1.0);
        it.divergence[x] = d < 0.0 ? 0.0 : d;
      }
    }
    it.max_div = kernels::max_value(it.divergence);
  }
};

std::vector<double> normalized_log(std::vector<double> v) {
  double n = log_sum_exp(v);
  for (double& x : v)
    if (x != kNegInf) x -= n;
  return v;
}

Pmf exp_pmf(std::span<const double> logv) {
  std::vector<double> p(logv.size());
  for (size_t i = 0; i < logv.size(); ++i) p[i] = logv[i] == kNegInf ? 0.0 : std::exp(logv[i]);
  // Scrub residual normalization error so downstream pmf checks stay exact.
  double total = kernels::sum(p);
  for (double& x : p) x /= total;
  return Pmf::trusted(std::move(p));
}

}  // namespace

double renyi_information(double order, const Prior& prior, const Dmc& w) {
  check_order(order);
  check_prior(prior, w);
  Workspace ws(w, order);
  Iterate it;
  ws.eval(log_of(prior.probs()), it);
  return it.info;
}

Pmf renyi_mean(double order, const Prior& prior, const Dmc& w) {
  check_order(order);
  check_prior(prior, w);
  Workspace ws(w, order);
  Iterate it;
  ws.eval(log_of(prior.probs()), it);
  return exp_pmf(it.log_center);
}

double gallager_e0(double s, const Prior& prior, const Dmc& w) {
  if (!(s > 0.0)) throw std::invalid_argument("gallager_e0: s must be positive");
  return s * renyi_information(1.0 / (1.0 + s), prior, w);
}

CapacityResult renyi_capacity(double order, const Dmc& w, const CapacitySolveOptions& opt) {
  check_order(order);
  if (!(opt.tol > 0.0)) throw std::invalid_argument("renyi_capacity: tol must be positive");
  Prior start = opt.start.value_or(Pmf::uniform(w.input_size()));
  check_prior(start, w);

  Workspace ws(w, order);
  std::vector<double> log_prior = log_of(start.probs());
  Iterate it;
  ws.eval(log_prior, it);

  CapacityResult best;
  best.order = order;
  long evals = 1;
  auto snapshot = [&](const Iterate& cur) {
    best.capacity_nats = cur.info;
    best.center = exp_pmf(cur.log_center);
    best.optimal_prior = exp_pmf(log_prior);
    best.iterations = evals;
    best.residual = cur.gap();
  };
  snapshot(it);

  // The natural ascent step multiplies the prior by exp(order * divergence);
  // for tiny orders that stalls, so the initial step is scaled up and the
  // ascent monitor below backs it off when it overshoots.
  const double eta0 = order >= 0.05 ? 1.0 : 0.05 / order;

  while (evals < opt.max_iterations) {
    if (it.gap() < opt.tol) {
      snapshot(it);
      best.converged = true;
      return best;
    }
    if (it.gap() < best.residual) snapshot(it);

    double eta = eta0;
    bool advanced = false;
    std::vector<double> trial_log_prior;
    Iterate trial;
    for (int halvings = 0; halvings < 40 && evals < opt.max_iterations; ++halvings) {
      trial_log_prior = log_prior;
      for (int x = 0; x < ws.X; ++x) {
        if (trial_log_prior[x] == kNegInf) continue;
        double d = it.divergence[x];
        trial_log_prior[x] += d == kPosInf ? 700.0 : eta * order * d;
      }
      trial_log_prior = normalized_log(std::move(trial_log_prior));
      ws.eval(trial_log_prior, trial);
      ++evals;
      if (trial.info >= it.info - 1e-13 * (1.0 + std::abs(it.info))) {
        advanced = true;
        break;
      }
      eta *= 0.5;  // oscillation/overshoot: damped exponentiated-gradient step
    }
    if (!advanced) break;  // numerically stationary
    log_prior = std::move(trial_log_prior);
    it = trial;
  }
  if (it.gap() < best.residual) snapshot(it);
  best.converged = best.residual < opt.tol;
  return best;
}

CapacityResult renyi_capacity(double order, const Dmc& w, double tol) {
  CapacitySolveOptions opt;
  opt.tol = tol;
  return renyi_capacity(order, w, opt);
}

double capacity_order_zero(const Dmc& w, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("capacity_order_zero: tol must be positive");
  CapacitySolveOptions opt;
  opt.tol = std::min(tol * 1e-2, 1e-10);
  double prev = kPosInf;
  CapacityResult r;
  for (int j = 0; j <= 40; ++j) {
    opt.start = j == 0 ? std::optional<Prior>() : std::optional<Prior>(r.optimal_prior);
    r = renyi_capacity(std::ldexp(1.0, -j), w, opt);
    if (j > 0 && std::abs(r.capacity_nats - prev) < tol) return r.capacity_nats;
    prev = r.capacity_nats;
  }
  return r.capacity_nats;
}

std::vector<CapacityResult> capacity_sweep(const Dmc& w, std::span<const double> orders,
                                           double tol) {
  std::vector<CapacityResult> out;
  out.reserve(orders.size());
  CapacitySolveOptions opt;
  opt.tol = tol;
  for (double a : orders) {
    out.push_back(renyi_capacity(a, w, opt));
    opt.start = out.back().optimal_prior;
  }
  return out;
}

std::vector<CapacityResult> center_curve(const Dmc& w, std::span<const double> orders,
                                         double tol, int jobs) {
  for (size_t i = 1; i < orders.size(); ++i)
    if (orders[i] < orders[i - 1])
      throw std::invalid_argument("center_curve: orders must be ascending");
  std::vector<CapacityResult> out(orders.size());
  parallel_for(orders.size(), jobs,
               [&](size_t i) { out[i] = renyi_capacity(orders[i], w, tol); });
  return out;
}

void write_capacity_csv(std::ostream& out, const Dmc& w,
                        const std::vector<CapacityResult>& results) {
  out << "order,capacity_nats,residual";
  for (int y = 0; y < w.output_size(); ++y) out << ",center_" << y;
  out << '\n';
  for (const CapacityResult& r : results) {
    out << fmt12(r.order) << ',' << fmt12(r.capacity_nats) << ',' << fmt12(r.residual);
    for (size_t y = 0; y < r.center.size(); ++y) out << ',' << fmt12(r.center[y]);
    out << '\n';
  }
}

const CapacityResult& CapacityCache::get(const Dmc& w, double order) {
  Key key{w.digest(), std::llround(order * 1e12)};
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto itr = memo_.find(key);
    if (itr != memo_.end()) return itr->second;
  }
  CapacityResult r = renyi_capacity(order, w, tol_);
  std::lock_guard<std::mutex> lock(mu_);
  return memo_.emplace(key, std::move(r)).first->second;
}

}  // namespace spb
