#include "spb/construction.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <ostream>

#include "spb/kernels.hpp"

namespace spb {

namespace {

struct Acc {
  double s = 0.0, c = 0.0;
  inline void add(double v) {
    double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  inline double value() const { return s + c; }
};

std::mutex g_tilt_mu;

}  // namespace

SubblockPlan make_subblocks(int n, int k) {
  if (n < 1) throw std::invalid_argument("make_subblocks: n must be positive");
  if (k < 1 || k > n) throw std::invalid_argument("make_subblocks: need 1 <= k <= n");
  SubblockPlan plan;
  plan.n = n;
  plan.k = k;
  int base = n / k;
  int longer = n - base * k;  // first `longer` subblocks get one extra use
  int t = 0;
  for (int i = 0; i < k; ++i) {
    int len = i < longer ? base + 1 : base;
    plan.length.push_back(len);
    plan.start_time.push_back(t + 1);
    t += len;
    plan.end_time.push_back(t);
  }
  return plan;
}

bool all_pass(const ConstructionReport& report) {
  for (const CheckLine& line : report)
    if (!line.pass) return false;
  return true;
}

void write_report(std::ostream& out, const ConstructionReport& report) {
  for (const CheckLine& line : report) {
    out << "check " << line.id << " lhs=" << fmt12(line.lhs) << " rhs=" << fmt12(line.rhs)
        << (line.pass ? " PASS" : " FAIL");
    if (!line.note.empty()) out << "  # " << line.note;
    out << '\n';
  }
}

double chebyshev_lower_bound(std::span<const double> step_second_moments, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("chebyshev_lower_bound: gamma must be positive");
  double sigma2 = kernels::sum(step_second_moments);
  if (!(sigma2 >= 0.0) || std::isinf(sigma2))
    throw std::invalid_argument("chebyshev_lower_bound: second moments must be finite");
  return 1.0 - sigma2 / (gamma * gamma);
}

double ConstructionModel::anchor_low() const {
  return (rho1_ - zgrid_.epsilon) / (1.0 - zgrid_.epsilon);
}

double ConstructionModel::anchor_high() const { return rho2_ / (1.0 - zgrid_.epsilon); }

int ConstructionModel::cube_index(double g) const {
  int j = static_cast<int>(std::ceil(g * plan_.n));
  return std::clamp(j, 1, plan_.n);
}

const ConstructionModel::TiltInfo& ConstructionModel::tilt(double z) const {
  long long key = std::llround(z * 1e12);
  {
    std::lock_guard<std::mutex> lock(g_tilt_mu);
    auto it = tilt_cache_.find(key);
    if (it != tilt_cache_.end()) return it->second;
  }
  const CapacityResult& cap = ctx_->cache().get(channel_, z);
  TiltInfo info;
  const int X = channel_.input_size(), Y = channel_.output_size();
  info.capacity = cap.capacity_nats;
  info.log_center.resize(Y);
  for (int y = 0; y < Y; ++y)
    info.log_center[y] = cap.center[y] > 0.0 ? std::log(cap.center[y]) : kNegInf;
  info.log_tilted.resize(static_cast<size_t>(X) * Y);
  info.d1_center.resize(X);
  info.d1_channel.resize(X);
  for (int x = 0; x < X; ++x) {
    Pmf tilted = tilt_pmf(z, channel_.row_pmf(x), cap.center).tilted;
    for (int y = 0; y < Y; ++y)
      info.log_tilted[static_cast<size_t>(x) * Y + y] =
          tilted[y] > 0.0 ? std::log(tilted[y]) : kNegInf;
    info.d1_center[x] = kl_divergence(tilted.probs(), cap.center.probs());
    info.d1_channel[x] = kl_divergence(tilted.probs(), channel_.row(x));
  }
  std::lock_guard<std::mutex> lock(g_tilt_mu);
  return tilt_cache_.emplace(key, std::move(info)).first->second;
}

int64_t ConstructionModel::boundary_histories(int subblock) const {
  return hist_count_[subblock];
}

double ConstructionModel::g_value(int subblock, int message, int64_t boundary_rank) const {
  return g_[subblock][static_cast<size_t>(message) * hist_count_[subblock] + boundary_rank];
}

double ConstructionModel::boundary_mass(int subblock, int message, int64_t boundary_rank) const {
  return pv_prefix_[subblock][static_cast<size_t>(message) * hist_count_[subblock] +
                              boundary_rank];
}

double ConstructionModel::h_statistic(int subblock, int message, int64_t boundary_rank,
                                      double z) const {
  const TiltInfo& ti = tilt(z);
  const int Y = channel_.output_size();
  const int t_first = plan_.start_time[subblock], t_last = plan_.end_time[subblock];
  const int64_t H = hist_count_[subblock];
  Acc h;
  // Forward recursion over the subblock under the selftilted channel: the
  // per-time contribution is the path mass times D1(W_z(input) || center_z).
  struct Frame {
    int t;
    int64_t within;
    int64_t scale;  // |Y|^(t - t_first)
    double mass;
  };
  std::vector<Frame> stack{{t_first, 0, 1, 1.0}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    int x = encoder_.input_at(message, f.t, boundary_rank + f.within * H);
    h.add(f.mass * ti.d1_center[x]);
    if (f.t == t_last) continue;
    for (int y = 0; y < Y; ++y) {
      double ly = ti.log_tilted[static_cast<size_t>(x) * Y + y];
      if (ly == kNegInf) continue;
      stack.push_back({f.t + 1, f.within + f.scale * y, f.scale * Y, f.mass * std::exp(ly)});
    }
  }
  return h.value();
}

double ConstructionModel::mean_h(int subblock, int message, int64_t boundary_rank,
                                 double anchor) const {
  Acc acc;
  for (int j = 0; j < zgrid_.atoms; ++j)
    acc.add(h_statistic(subblock, message, boundary_rank, zgrid_.atom(anchor, j)));
  return acc.value() / zgrid_.atoms;
}

ConstructionModel ConstructionModel::build(const ConstructionInputs& in) {
  ConstructionModel m;
  m.channel_ = in.channel;
  m.encoder_ = in.encoder;
  m.decoder_ = in.decoder;
  if (m.encoder_.input_size() != m.channel_.input_size() ||
      m.encoder_.output_size() != m.channel_.output_size())
    throw std::invalid_argument("construction: encoder/channel alphabet mismatch");
  const int n = m.encoder_.n();
  const int M = m.encoder_.message_count();
  const int Y = m.channel_.output_size();
  int64_t out_space = output_space_size(Y, n, in.space_cap);
  if (static_cast<int64_t>(m.decoder_.size()) != out_space)
    throw std::invalid_argument("construction: decoder is not total on the output space");
  if (in.atoms < 1) throw std::invalid_argument("construction: need at least one z atom");
  m.plan_ = make_subblocks(n, in.subblocks);
  m.tol_ = in.tol;
  m.g_tol_ = in.g_tol;
  m.rate_ = std::log(static_cast<double>(M)) / n;
  m.rate0_ = in.rate0;
  m.rate1_ = in.rate1;
  m.delta1_ = in.delta1;

  m.ctx_ = std::make_unique<ExponentContext>(m.channel_, in.tol);
  if (!(in.rate0 < in.rate1))
    throw std::invalid_argument("construction: need rate0 < rate1");
  m.rho1_ = find_order_for_rate(*m.ctx_, in.rate0, in.tol);
  m.rho2_ = find_order_for_spe(*m.ctx_, in.rate1, in.tol);
  m.c_half_ = m.ctx_->c_half();

  double eps_cap = 0.5 * std::min(m.rho1_, 1.0 - m.rho2_);
  if (!(in.epsilon > 0.0) || in.epsilon > eps_cap + 1e-12)
    throw std::invalid_argument("construction: epsilon must lie in (0, min(rho1,1-rho2)/2 = " +
                                fmt12(eps_cap) + "]");
  m.zgrid_ = ZGrid{in.atoms, in.epsilon};

  if (!(in.delta1 >= 0.0))
    throw std::invalid_argument("construction: delta1 must be non-negative");
  if (m.rate_ < in.rate0 + in.delta1 - 1e-12 || m.rate_ > in.rate1 + 1e-12)
    throw std::invalid_argument(
        "construction: effective window rate0 + delta1 <= rate <= rate1 violated (rate = " +
        fmt12(m.rate_) + ")");

  m.e_sp_shifted_ = sphere_packing_exponent(*m.ctx_, m.rate_ - in.delta1).value;
  m.delta1_formula_ = delta1_formula(n, m.plan_.k, in.epsilon, m.c_half_, m.rho2_);
  m.delta2_formula_ = delta2_formula(n, m.plan_.k, in.epsilon, m.c_half_, m.rho1_, m.rate_);
  m.formula_window_ok_ = m.rate1_ >= m.rate_ && m.rate_ >= m.rate0_ + m.delta1_formula_;
  double sqrt_k = std::sqrt(static_cast<double>(m.plan_.k));
  m.gamma_q_ = 8.0 * (2.0 + m.c_half_) * n / ((1.0 - m.rho2_) * sqrt_k);
  m.gamma_v_ = 8.0 * (2.0 + m.c_half_) * n / (m.rho1_ * sqrt_k);

  // Layout: history counts at subblock boundaries and cell counts per
  // subblock; the flat point index is message-major, then per-subblock
  // (atom, output block) cells.
  const int k = m.plan_.k;
  m.hist_count_.resize(k);
  m.block_count_.resize(k);
  m.cell_count_.resize(k);
  long double points = M;
  int64_t hist = 1;
  for (int i = 0; i < k; ++i) {
    m.hist_count_[i] = hist;
    int64_t blocks = 1;
    for (int t = 0; t < m.plan_.length[i]; ++t) blocks *= Y;
    m.block_count_[i] = blocks;
    m.cell_count_[i] = static_cast<int64_t>(in.atoms) * blocks;
    points *= static_cast<long double>(m.cell_count_[i]);
    hist *= blocks;
  }
  if (points > static_cast<long double>(in.space_cap))
    throw budget_error("construction: extended sample space exceeds cap");

  m.choose_anchors();
  m.enumerate_measures();
  return m;
}

void ConstructionModel::choose_anchors() {
  const int k = plan_.k, M = encoder_.message_count(), Y = channel_.output_size();
  g_.resize(k);
  pv_prefix_.resize(k);
  pv_prefix_[0].assign(M, 1.0 / M);
  for (int i = 0; i < k; ++i) {
    const int64_t H = hist_count_[i];
    g_[i].resize(static_cast<size_t>(M) * H);
    for (int msg = 0; msg < M; ++msg) {
      for (int64_t h = 0; h < H; ++h) {
        double target = plan_.length[i] * (rate_ - delta1_);
        double hi = anchor_high(), lo = anchor_low();
        double mh = mean_h(i, msg, h, hi);
        double chosen;
        if (mh <= target + 1e-12) {
          chosen = hi;
        } else {
          double ml = mean_h(i, msg, h, lo);
          if (ml > target)
            throw std::runtime_error(
                "construction: anchor rule has no bracket at subblock " + std::to_string(i) +
                ", message " + std::to_string(msg) + ", history " + std::to_string(h) +
                ": mean at low anchor " + fmt12(ml) + " exceeds target " + fmt12(target));
          double a = lo, b = hi;
          chosen = lo;
          bool found = false;
          for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (a + b);
            double f = mean_h(i, msg, h, mid) - target;
            if (std::abs(f) <= g_tol_) {
              chosen = mid;
              found = true;
              break;
            }
            (f <= 0.0 ? a : b) = mid;
          }
          if (!found)
            throw std::runtime_error(
                "construction: anchor bisection did not converge at subblock " +
                std::to_string(i) + ", message " + std::to_string(msg) + ", history " +
                std::to_string(h));
        }
        g_[i][static_cast<size_t>(msg) * H + h] = chosen;
      }
    }
    if (i + 1 < k) {
      // Push the boundary masses of P_v through this subblock.
      const int64_t Hn = hist_count_[i + 1];
      pv_prefix_[i + 1].assign(static_cast<size_t>(M) * Hn, 0.0);
      const int t_first = plan_.start_time[i], t_last = plan_.end_time[i];
      for (int msg = 0; msg < M; ++msg) {
        for (int64_t h = 0; h < H; ++h) {
          double base = pv_prefix_[i][static_cast<size_t>(msg) * H + h];
          if (base == 0.0) continue;
          double anchor = g_[i][static_cast<size_t>(msg) * H + h];
          for (int j = 0; j < zgrid_.atoms; ++j) {
            const TiltInfo& ti = tilt(zgrid_.atom(anchor, j));
            struct Frame {
              int t;
              int64_t within, scale;
              double mass;
            };
            std::vector<Frame> stack{{t_first, 0, 1, base / zgrid_.atoms}};
            while (!stack.empty()) {
              Frame f = stack.back();
              stack.pop_back();
              int x = encoder_.input_at(msg, f.t, h + f.within * H);
              for (int y = 0; y < Y; ++y) {
                double ly = ti.log_tilted[static_cast<size_t>(x) * Y + y];
                if (ly == kNegInf) continue;
                double mass = f.mass * std::exp(ly);
                int64_t within = f.within + f.scale * y;
                if (f.t == t_last) {
                  pv_prefix_[i + 1][static_cast<size_t>(msg) * Hn + (h + within * H)] += mass;
                } else {
                  stack.push_back({f.t + 1, within, f.scale * Y, mass});
                }
              }
            }
          }
        }
      }
    }
  }
}

void ConstructionModel::enumerate_measures() {
  const int k = plan_.k, M = encoder_.message_count(), Y = channel_.output_size();
  long double total_ld = M;
  for (int i = 0; i < k; ++i) total_ld *= static_cast<long double>(cell_count_[i]);
  size_t total = static_cast<size_t>(total_ld);
  log_p_.assign(total, 0.0);
  log_pv_.assign(total, 0.0);
  log_pq_.assign(total, 0.0);

  std::vector<double> log_w(channel_.flat().size());
  for (size_t i = 0; i < log_w.size(); ++i)
    log_w[i] = channel_.flat()[i] > 0.0 ? std::log(channel_.flat()[i]) : kNegInf;
  const double log_minv = -std::log(static_cast<double>(M));
  const double log_atom = -std::log(static_cast<double>(zgrid_.atoms));

  // Depth-first over subblocks; within a subblock, over (atom, output block).
  auto rec = [&](auto&& self, int i, int msg, int64_t boundary, size_t idx, double lp, double lv,
                 double lq) -> void {
    if (i == k) {
      log_p_[idx] = lp;
      log_pv_[idx] = lv;
      log_pq_[idx] = lq;
      return;
    }
    const int64_t H = hist_count_[i];
    const int t_first = plan_.start_time[i], t_last = plan_.end_time[i];
    double anchor = g_[i][static_cast<size_t>(msg) * H + boundary];
    for (int j = 0; j < zgrid_.atoms; ++j) {
      const TiltInfo& ti = tilt(zgrid_.atom(anchor, j));
      struct Frame {
        int t;
        int64_t within, scale;
        double lw, lv, lq;
      };
      std::vector<Frame> stack{{t_first, 0, 1, 0.0, 0.0, 0.0}};
      while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        int x = encoder_.input_at(msg, f.t, boundary + f.within * H);
        for (int y = 0; y < Y; ++y) {
          double lw2 = f.lw + log_w[static_cast<size_t>(x) * Y + y];
          double lv2 = f.lv + ti.log_tilted[static_cast<size_t>(x) * Y + y];
          double lq2 = f.lq + ti.log_center[y];
          int64_t within = f.within + f.scale * y;
          if (f.t == t_last) {
            int64_t cell = static_cast<int64_t>(j) * block_count_[i] + within;
            self(self, i + 1, msg, boundary + within * H,
                 idx * static_cast<size_t>(cell_count_[i]) + static_cast<size_t>(cell),
                 lp + log_atom + lw2, lv + log_atom + lv2, lq + log_atom + lq2);
          } else {
            stack.push_back({f.t + 1, within, f.scale * Y, lw2, lv2, lq2});
          }
        }
      }
    }
  };
  for (int msg = 0; msg < M; ++msg)
    rec(rec, 0, msg, 0, static_cast<size_t>(msg), log_minv, log_minv, log_minv);

  p_.resize(total);
  pv_.resize(total);
  pq_.resize(total);
  q_ratio_.resize(total);
  v_ratio_.resize(total);
  for (size_t i = 0; i < total; ++i) {
    p_[i] = log_p_[i] == kNegInf ? 0.0 : std::exp(log_p_[i]);
    pv_[i] = log_pv_[i] == kNegInf ? 0.0 : std::exp(log_pv_[i]);
    pq_[i] = log_pq_[i] == kNegInf ? 0.0 : std::exp(log_pq_[i]);
    q_ratio_[i] =
        log_pv_[i] == kNegInf ? kNegInf : log_pv_[i] - log_pq_[i];  // Pv-support is in Pq-support
    v_ratio_[i] = log_pv_[i] == kNegInf ? kNegInf : log_pv_[i] - log_p_[i];
  }
}

ConstructionModel::Point ConstructionModel::decode_point(size_t idx) const {
  const int k = plan_.k;
  Point pt;
  pt.atom.resize(k);
  pt.block.resize(k);
  pt.boundary.resize(k);
  pt.z.resize(k);
  size_t rem = idx;
  for (int i = k - 1; i >= 0; --i) {
    int64_t cell = static_cast<int64_t>(rem % static_cast<size_t>(cell_count_[i]));
    rem /= static_cast<size_t>(cell_count_[i]);
    pt.atom[i] = static_cast<int>(cell / block_count_[i]);
    pt.block[i] = cell % block_count_[i];
  }
  pt.message = static_cast<int>(rem);
  int64_t boundary = 0;
  for (int i = 0; i < k; ++i) {
    pt.boundary[i] = boundary;
    boundary += pt.block[i] * hist_count_[i];
    pt.z[i] = zgrid_.atom(g_value(i, pt.message, pt.boundary[i]), pt.atom[i]);
  }
  pt.output_rank = boundary;
  return pt;
}

namespace {

struct NodeMoments {
  double mean_q = 0.0, m2_q = 0.0;
  double mean_v = 0.0, m2_v = 0.0;
};

}  // namespace

ConstructionReport ConstructionModel::verify_displays() const {
  ConstructionReport rep;
  const int k = plan_.k, M = encoder_.message_count(), Y = channel_.output_size();
  const double eps = zgrid_.epsilon;
  const int n = plan_.n;

  auto line = [&rep](const std::string& id, double lhs, double rhs, bool pass,
                     const std::string& note) {
    rep.push_back({id, lhs, rhs, pass, note});
  };

  line("p-normalization", kernels::sum(p_), 1.0, std::abs(kernels::sum(p_) - 1.0) <= 1e-12,
       "true-channel measure sums to one");
  line("pv-normalization", kernels::sum(pv_), 1.0, std::abs(kernels::sum(pv_) - 1.0) <= 1e-12,
       "selftilted measure sums to one");
  line("pq-normalization", kernels::sum(pq_), 1.0, std::abs(kernels::sum(pq_) - 1.0) <= 1e-12,
       "center-product measure sums to one");

  // Anchor and atom ranges, conditional means and second moments, node by
  // node. The per-node walk recomputes the block log-ratios directly.
  double anchor_min = kPosInf, anchor_max = kNegInf;
  double z_min = kPosInf, z_max = kNegInf;
  double h_min = kPosInf, h_excess = kNegInf;     // h - l*C_z
  double mean_min = kPosInf, mean_excess = kNegInf;  // E[Q_i|node] - target
  double route_gap = 0.0;  // |E[Q_i|node,z] - h(z)| worst case
  double q2_max = 0.0;
  double v2_max = 0.0;
  double v_mean_excess = kNegInf;
  const double v_cap_per_use = e_sp_shifted_ + 2.0 * rate_ * eps / (rho1_ * rho1_);

  for (int i = 0; i < k; ++i) {
    const int64_t H = hist_count_[i];
    const int t_first = plan_.start_time[i], t_last = plan_.end_time[i];
    const double target = plan_.length[i] * (rate_ - delta1_);
    for (int msg = 0; msg < M; ++msg) {
      for (int64_t h = 0; h < H; ++h) {
        double anchor = g_value(i, msg, h);
        anchor_min = std::min(anchor_min, anchor);
        anchor_max = std::max(anchor_max, anchor);
        NodeMoments nm;
        for (int j = 0; j < zgrid_.atoms; ++j) {
          double z = zgrid_.atom(anchor, j);
          z_min = std::min(z_min, z);
          z_max = std::max(z_max, z);
          const TiltInfo& ti = tilt(z);
          double hv = h_statistic(i, msg, h, z);
          h_min = std::min(h_min, hv);
          h_excess = std::max(h_excess, hv - plan_.length[i] * ti.capacity);
          // Exact block moments of the two log-ratios under W_z.
          Acc eq, eq2, ev, ev2;
          struct Frame {
            int t;
            int64_t within, scale;
            double mass, rq, rv;
          };
          std::vector<Frame> stack{{t_first, 0, 1, 1.0, 0.0, 0.0}};
          while (!stack.empty()) {
            Frame f = stack.back();
            stack.pop_back();
            int x = encoder_.input_at(msg, f.t, h + f.within * H);
            for (int y = 0; y < Y; ++y) {
              double lt = ti.log_tilted[static_cast<size_t>(x) * Y + y];
              if (lt == kNegInf) continue;
              double mass = f.mass * std::exp(lt);
              double rq = f.rq + lt - ti.log_center[y];
              double lw = channel_.row(x)[y] > 0.0 ? std::log(channel_.row(x)[y]) : kNegInf;
              double rv = f.rv + lt - lw;
              int64_t within = f.within + f.scale * y;
              if (f.t == t_last) {
                eq.add(mass * rq);
                eq2.add(mass * rq * rq);
                ev.add(mass * rv);
                ev2.add(mass * rv * rv);
              } else {
                stack.push_back({f.t + 1, within, f.scale * Y, mass, rq, rv});
              }
            }
          }
          route_gap = std::max(route_gap, std::abs(eq.value() - hv));
          nm.mean_q += eq.value() / zgrid_.atoms;
          nm.m2_q += eq2.value() / zgrid_.atoms;
          nm.mean_v += ev.value() / zgrid_.atoms;
          nm.m2_v += ev2.value() / zgrid_.atoms;
        }
        mean_min = std::min(mean_min, nm.mean_q);
        mean_excess = std::max(mean_excess, nm.mean_q - target);
        v2_max = std::max(v2_max, nm.m2_v);
        v_mean_excess =
            std::max(v_mean_excess, nm.mean_v - plan_.length[i] * v_cap_per_use);
      }
    }
  }
  (void)q2_max;

  // Unconditional E[Q_i^2]: weight the per-node conditional moments by the
  // boundary masses.
  double q2_worst = 0.0;
  for (int i = 0; i < k; ++i) {
    const int64_t H = hist_count_[i];
    const int t_first = plan_.start_time[i], t_last = plan_.end_time[i];
    Acc total;
    for (int msg = 0; msg < M; ++msg) {
      for (int64_t h = 0; h < H; ++h) {
        double base = boundary_mass(i, msg, h);
        if (base == 0.0) continue;
        double anchor = g_value(i, msg, h);
        Acc m2;
        for (int j = 0; j < zgrid_.atoms; ++j) {
          const TiltInfo& ti = tilt(zgrid_.atom(anchor, j));
          struct Frame {
            int t;
            int64_t within, scale;
            double mass, rq;
          };
          std::vector<Frame> stack{{t_first, 0, 1, 1.0 / zgrid_.atoms, 0.0}};
          while (!stack.empty()) {
            Frame f = stack.back();
            stack.pop_back();
            int x = encoder_.input_at(msg, f.t, h + f.within * H);
            for (int y = 0; y < Y; ++y) {
              double lt = ti.log_tilted[static_cast<size_t>(x) * Y + y];
              if (lt == kNegInf) continue;
              double mass = f.mass * std::exp(lt);
              double rq = f.rq + lt - ti.log_center[y];
              if (f.t == t_last) {
                m2.add(mass * rq * rq);
              } else {
                stack.push_back({f.t + 1, f.within + f.scale * y, f.scale * Y, mass, rq});
              }
            }
          }
        }
        total.add(base * m2.value());
      }
    }
    q2_worst = std::max(q2_worst, total.value());
  }

  double ratio_nk = static_cast<double>(n) / k;
  double q2_ceiling =
      16.0 * (4.0 + c_half_ * c_half_) / ((1.0 - rho2_) * (1.0 - rho2_)) * ratio_nk * ratio_nk;
  double v2_ceiling =
      16.0 * (2.0 + c_half_) * (2.0 + c_half_) / (rho1_ * rho1_) * ratio_nk * ratio_nk;

  line("anchor-min", anchor_min, anchor_low(), anchor_min >= anchor_low() - 1e-12,
       "anchors stay above (rho1-eps)/(1-eps)");
  line("anchor-max", anchor_max, anchor_high(), anchor_max <= anchor_high() + 1e-12,
       "anchors stay below rho2/(1-eps)");
  line("z-atom-min", z_min, rho1_ - eps, z_min >= rho1_ - eps - 1e-12,
       "atoms stay above rho1 - eps");
  line("z-atom-max", z_max, rho2_ + eps, z_max <= rho2_ + eps + 1e-12,
       "atoms stay below rho2 + eps");
  line("h-nonneg", h_min, 0.0, h_min >= -1e-12, "per-z divergence sums are non-negative");
  line("h-capacity-cap", h_excess, 0.0, h_excess <= 1e-9,
       "per-z divergence sum at most block length times C_z");
  line("mean-route-consistency", route_gap, 1e-9, route_gap <= 1e-9,
       "direct log-ratio mean equals the divergence recursion");
  line("mean-nonneg", mean_min, 0.0, mean_min >= -1e-12,
       "conditional block log-ratio means are non-negative");
  line("mean-cap", mean_excess, 0.0, mean_excess <= g_tol_ + 1e-12,
       "conditional means at most block length times (rate - delta1)");
  line("center-ratio-second-moment", q2_worst, q2_ceiling, q2_worst <= q2_ceiling,
       "E[(block center log-ratio)^2] within its ceiling");
  line("channel-ratio-second-moment", v2_max, v2_ceiling, v2_max <= v2_ceiling,
       "conditional E[(block channel log-ratio)^2] within its ceiling");
  line("channel-ratio-mean-cap", v_mean_excess, 0.0, v_mean_excess <= 1e-6,
       "conditional channel log-ratio means within E_sp(rate-delta1) + 2 rate eps/rho1^2 per use");

  // Density exactness on the support: exp(center ratio) * Pq == Pv.
  double worst_q = 0.0, worst_v = 0.0;
  for (size_t i = 0; i < point_count(); ++i) {
    if (pv_[i] == 0.0) continue;
    worst_q = std::max(worst_q, std::abs(std::exp(q_ratio_[i]) * pq_[i] - pv_[i]) / pv_[i]);
    worst_v = std::max(worst_v, std::abs(std::exp(v_ratio_[i]) * p_[i] - pv_[i]) / pv_[i]);
  }
  line("density-exactness-center", worst_q, 1e-12, worst_q <= 1e-12,
       "exp(log-ratio) reproduces Pv/Pq pointwise");
  line("density-exactness-channel", worst_v, 1e-12, worst_v <= 1e-12,
       "exp(log-ratio) reproduces Pv/P pointwise");
  return rep;
}

ChebyshevEvents ConstructionModel::chebyshev_events() const {
  ChebyshevEvents ev;
  const int n = plan_.n;
  ev.lambda_q = n * (rate_ - delta1_) + gamma_q_;
  ev.lambda_v =
      n * (e_sp_shifted_ + 2.0 * rate_ * zgrid_.epsilon / (rho1_ * rho1_)) + gamma_v_;
  ev.p_aq = kernels::masked_mass(pv_, q_ratio_, ev.lambda_q);
  ev.p_av = kernels::masked_mass(pv_, v_ratio_, ev.lambda_v);
  ev.in_aq.resize(point_count());
  ev.in_av.resize(point_count());
  Acc joint;
  for (size_t i = 0; i < point_count(); ++i) {
    ev.in_aq[i] = q_ratio_[i] <= ev.lambda_q;
    ev.in_av[i] = v_ratio_[i] <= ev.lambda_v;
    if (ev.in_aq[i] && ev.in_av[i]) joint.add(pv_[i]);
  }
  ev.p_joint = joint.value();
  return ev;
}

std::pair<double, double> ConstructionModel::measure_change_check(
    std::span<const uint8_t> event, double lambda, char which) const {
  if (event.size() != point_count())
    throw std::invalid_argument("measure_change_check: event mask size mismatch");
  std::span<const double> den = which == 'q' ? pq() : p();
  std::span<const double> ratio = which == 'q' ? center_log_ratios() : channel_log_ratios();
  Acc lhs, rhs;
  for (size_t i = 0; i < point_count(); ++i) {
    if (!event[i] || !(ratio[i] <= lambda)) continue;
    lhs.add(den[i]);
    rhs.add(pv_[i]);
  }
  return {lhs.value(), std::exp(-lambda) * rhs.value()};
}

PigeonholeResult ConstructionModel::pigeonhole(const ChebyshevEvents& events) const {
  PigeonholeResult ph;
  const int k = plan_.k, M = encoder_.message_count(), n = plan_.n;
  const double eps = zgrid_.epsilon;
  ph.eps_tilde = eps + (1.0 - eps) / n;
  ph.domination_constant = std::pow(ph.eps_tilde / eps, k);

  // Cell masses of Pv(A_q and A_v and cell) over the n^k anchor cells.
  long double cells_ld = 1.0L;
  for (int i = 0; i < k; ++i) cells_ld *= n;
  if (cells_ld > 4e6) throw budget_error("pigeonhole: too many anchor cells");
  size_t cube_total = static_cast<size_t>(cells_ld);
  std::vector<Acc> mass(cube_total);
  std::vector<int64_t> cube_rank(point_count());
  for (size_t idx = 0; idx < point_count(); ++idx) {
    Point pt = decode_point(idx);
    int64_t rank = 0;
    for (int i = 0; i < k; ++i)
      rank = rank * n + (cube_index(g_value(i, pt.message, pt.boundary[i])) - 1);
    cube_rank[idx] = rank;
    if (events.in_aq[idx] && events.in_av[idx]) mass[static_cast<size_t>(rank)].add(pv_[idx]);
  }
  size_t best = 0;
  for (size_t r = 1; r < cube_total; ++r)
    if (mass[r].value() > mass[best].value()) best = r;
  ph.cube_mass = mass[best].value();
  ph.cube.resize(k);
  {
    size_t rem = best;
    for (int i = k - 1; i >= 0; --i) {
      ph.cube[i] = static_cast<int>(rem % n) + 1;
      rem /= n;
    }
  }
  ph.in_cube.resize(point_count());
  for (size_t idx = 0; idx < point_count(); ++idx)
    ph.in_cube[idx] = cube_rank[idx] == static_cast<int64_t>(best);

  // In-cell anchor sets per (subblock, past history), message-averaged; the
  // mixture measure they induce dominates the center-product measure on the
  // cell with per-subblock constant (number of distinct anchors) <=
  // eps_tilde/eps.
  std::vector<std::vector<std::vector<double>>> anchors(k);
  ph.max_anchors_per_cell = 0;
  for (int i = 0; i < k; ++i) {
    const int64_t H = hist_count_[i];
    anchors[i].resize(H);
    for (int64_t h = 0; h < H; ++h) {
      for (int msg = 0; msg < M; ++msg) {
        double g = g_value(i, msg, h);
        if (cube_index(g) != ph.cube[i]) continue;
        auto& set = anchors[i][h];
        if (std::find(set.begin(), set.end(), g) == set.end()) set.push_back(g);
      }
      ph.max_anchors_per_cell =
          std::max(ph.max_anchors_per_cell, static_cast<int>(anchors[i][h].size()));
    }
  }

  // Atom membership: mu_i(z | h) * atoms = (#anchors whose grid contains z) /
  // (#anchors in the cell). Membership is exact double equality of the
  // recomputed atom position.
  auto mixture_factor = [&](int i, int64_t h, double z) -> double {
    const auto& set = anchors[i][h];
    if (set.empty()) {
      // Fallback: corner-anchored widened grid; only past histories with no
      // in-cell anchor use it, and no dominated point has one.
      double corner = n == 1 ? 0.0 : static_cast<double>(ph.cube[i] - 1) / (n - 1);
      ZGrid wide{zgrid_.atoms, ph.eps_tilde};
      for (int j = 0; j < zgrid_.atoms; ++j)
        if (wide.atom(corner, j) == z) return 1.0;
      return 0.0;
    }
    int count = 0;
    for (double a : set) {
      double jd = ((z - (1.0 - eps) * a) * zgrid_.atoms / eps) - 0.5;
      int j = static_cast<int>(std::llround(jd));
      if (j >= 0 && j < zgrid_.atoms && zgrid_.atom(a, j) == z) ++count;
    }
    return static_cast<double>(count) / set.size();
  };

  // Pointwise domination on the chosen cell.
  double worst = kNegInf;
  const double log_dom = k * std::log(ph.eps_tilde / eps);
  for (size_t idx = 0; idx < point_count(); ++idx) {
    if (!ph.in_cube[idx] || pq_[idx] == 0.0) continue;
    Point pt = decode_point(idx);
    double log_mix = 0.0;
    for (int i = 0; i < k; ++i) {
      double f = mixture_factor(i, pt.boundary[i], pt.z[i]);
      log_mix += f > 0.0 ? std::log(f) : kNegInf;
    }
    // log Pq - log Pu = -log_mix must stay below log_dom.
    worst = std::max(worst, -log_mix - log_dom);
  }
  ph.domination_ok = worst <= 1e-12;

  // Exact Pu over its own support: z atoms from the mixture, outputs from
  // the center products; the message only relabels the uniform factor, so
  // the decoded-equals-message probability is exactly 1/M.
  Acc pu_total, pu_correct;
  const int Y = channel_.output_size();
  auto rec = [&](auto&& self, int i, int64_t boundary, double log_mass) -> void {
    if (i == k) {
      double mass = std::exp(log_mass);
      pu_total.add(mass);
      int decoded = decoder_[boundary];
      for (int msg = 0; msg < M; ++msg)
        if (decoded == msg) pu_correct.add(mass / M);
      return;
    }
    const int64_t H = hist_count_[i];
    const int t_last = plan_.end_time[i];
    const int t_first = plan_.start_time[i];
    // Distinct atom values with multiplicities across the in-cell anchors.
    std::vector<std::pair<double, int>> zs;
    const auto& set = anchors[i][boundary];  // boundary rank is < H at this level
    if (set.empty()) {
      double corner = n == 1 ? 0.0 : static_cast<double>(ph.cube[i] - 1) / (n - 1);
      ZGrid wide{zgrid_.atoms, ph.eps_tilde};
      for (int j = 0; j < zgrid_.atoms; ++j) zs.push_back({wide.atom(corner, j), 1});
    } else {
      for (double a : set)
        for (int j = 0; j < zgrid_.atoms; ++j) {
          double z = zgrid_.atom(a, j);
          bool found = false;
          for (auto& e : zs)
            if (e.first == z) {
              ++e.second;
              found = true;
              break;
            }
          if (!found) zs.push_back({z, 1});
        }
    }
    int c = set.empty() ? 1 : static_cast<int>(set.size());
    for (const auto& [z, count] : zs) {
      const TiltInfo& ti = tilt(z);
      double log_mu = std::log(static_cast<double>(count)) -
                      std::log(static_cast<double>(c) * zgrid_.atoms);
      struct Frame {
        int t;
        int64_t within, scale;
        double lq;
      };
      std::vector<Frame> stack{{t_first, 0, 1, 0.0}};
      while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        for (int y = 0; y < Y; ++y) {
          double lq2 = f.lq + ti.log_center[y];
          int64_t within = f.within + f.scale * y;
          if (f.t == t_last) {
            if (lq2 != kNegInf)
              self(self, i + 1, boundary + within * H, log_mass + log_mu + lq2);
          } else {
            stack.push_back({f.t + 1, within, f.scale * Y, lq2});
          }
        }
      }
    }
  };
  rec(rec, 0, 0, 0.0);
  ph.pu_total_mass = pu_total.value();
  ph.pu_correct_prob = pu_correct.value();

  double floor = 1.0 / (2.0 * std::pow(static_cast<double>(n), k));
  ph.checks.push_back({"cube-mass", ph.cube_mass, floor,
                       ph.cube_mass >= floor * (1.0 - 1e-12),
                       "some anchor cell holds at least 1/(2 n^k) of the joint event"});
  ph.checks.push_back({"anchors-per-cell", static_cast<double>(ph.max_anchors_per_cell),
                       ph.eps_tilde / eps,
                       ph.max_anchors_per_cell <= ph.eps_tilde / eps + 1e-12,
                       "mixture stays within the widened-interval budget"});
  ph.checks.push_back({"mixture-domination", worst, 0.0, ph.domination_ok,
                       "Pq <= (eps_tilde/eps)^k Pu pointwise on the cell"});
  ph.checks.push_back({"pu-normalization", ph.pu_total_mass, 1.0,
                       std::abs(ph.pu_total_mass - 1.0) <= 1e-10,
                       "mixture measure sums to one"});
  ph.checks.push_back({"message-independence", ph.pu_correct_prob, 1.0 / M,
                       std::abs(ph.pu_correct_prob - 1.0 / M) <= 1e-12,
                       "decoded-equals-message probability is exactly 1/M under Pu"});
  return ph;
}

FullChainResult ConstructionModel::full_chain_verify(const ChebyshevEvents& events,
                                                     const PigeonholeResult& ph) const {
  FullChainResult out;
  const int k = plan_.k, n = plan_.n, M = encoder_.message_count();
  auto line = [&out](const std::string& id, double lhs, double rhs, bool pass,
                     const std::string& note) {
    out.checks.push_back({id, lhs, rhs, pass, note});
  };

  line("event-center-prob", events.p_aq, 0.75, events.p_aq >= 0.75 - 1e-12,
       "Pv of the center-ratio event");
  line("event-channel-prob", events.p_av, 0.75, events.p_av >= 0.75 - 1e-12,
       "Pv of the channel-ratio event");
  line("event-joint-prob", events.p_joint, 0.5, events.p_joint >= 0.5 - 1e-12,
       "Pv of the joint event");
  double floor = 1.0 / (2.0 * std::pow(static_cast<double>(n), k));
  line("cube-mass", ph.cube_mass, floor, ph.cube_mass >= floor * (1.0 - 1e-12),
       "chosen cell retains 1/(2 n^k)");

  // Masses of the chain events.
  Acc b_v, b_q, err_v, err_p;
  for (size_t i = 0; i < point_count(); ++i) {
    if (!(events.in_aq[i] && events.in_av[i] && ph.in_cube[i])) continue;
    Point pt = decode_point(i);
    bool correct = decoder_[pt.output_rank] == pt.message;
    if (correct) {
      b_v.add(pv_[i]);
      b_q.add(pq_[i]);
    } else {
      err_v.add(pv_[i]);
      err_p.add(p_[i]);
    }
  }
  double map_change_rhs = std::exp(events.lambda_q) * b_q.value();
  line("chain-map-change", b_v.value(), map_change_rhs,
       b_v.value() <= map_change_rhs * (1.0 + 1e-12) + 1e-300,
       "Pv mass of decoded-correct moves to Pq at exp(lambda_q)");
  double dominate_rhs = ph.domination_constant * ph.pu_correct_prob;
  line("chain-map-dominate", b_q.value(), dominate_rhs,
       b_q.value() <= dominate_rhs * (1.0 + 1e-12),
       "Pq mass of decoded-correct bounded through the mixture measure");

  double quarter = 1.0 / (4.0 * std::pow(static_cast<double>(n), k));
  double window_lhs = std::exp(events.lambda_q) * ph.domination_constant / M;
  bool window = window_lhs <= quarter;
  line("chain-window", window_lhs, quarter, window,
       "exp(lambda_q) (eps_tilde/eps)^k / M at most 1/(4 n^k); holds when delta1 takes its "
       "formula value and the rate window does");

  out.closed_form_bound =
      std::exp(-plan_.n * (e_sp_shifted_ + delta2_formula_));
  out.final_bound = std::exp(-events.lambda_v) * quarter;
  CodeEvaluation eval = evaluate_code(channel_, encoder_, decoder_);
  Acc perr;
  for (size_t i = 0; i < point_count(); ++i) {
    Point pt = decode_point(i);
    if (decoder_[pt.output_rank] != pt.message) perr.add(p_[i]);
  }
  out.error_probability = perr.value();
  line("error-probability-match", out.error_probability, eval.average_error,
       std::abs(out.error_probability - eval.average_error) <= 1e-12,
       "P(decoded != message) equals the code's exact average error");

  if (window) {
    line("chain-error-mass", err_v.value(), quarter, err_v.value() >= quarter * (1.0 - 1e-12),
         "joint event keeps 1/(4 n^k) of Pv on decoding errors");
    double change_rhs = std::exp(-events.lambda_v) * err_v.value();
    line("chain-channel-change", err_p.value(), change_rhs,
         err_p.value() >= change_rhs * (1.0 - 1e-12),
         "P mass of the error event dominates exp(-lambda_v) Pv mass");
    line("chain-final-bound", out.error_probability, out.final_bound,
         out.error_probability >= out.final_bound * (1.0 - 1e-12),
         "error probability at least exp(-lambda_v)/(4 n^k)");
  }
  // The window line is a hypothesis, not a property of the discrete model;
  // every other line must hold unconditionally.
  bool hard_ok = true;
  for (const CheckLine& c : out.checks)
    if (c.id != "chain-window" && !c.pass) hard_ok = false;
  if (!hard_ok)
    out.outcome = ChainOutcome::violation;
  else
    out.outcome = window ? ChainOutcome::all_hold : ChainOutcome::hypothesis_failed;
  return out;
}

}  // namespace spb
