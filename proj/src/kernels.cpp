#include "spb/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

namespace spb::kernels {
namespace detail {

namespace {

// Neumaier-compensated accumulator.
struct Acc {
  double s = 0.0;
  double c = 0.0;
  inline void add(double v) {
    double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  inline double value() const { return s + c; }
};

}  // namespace

double sum_scalar(std::span<const double> x) {
  Acc a;
  for (double v : x) a.add(v);
  return a.value();
}

double dot_scalar(std::span<const double> a, std::span<const double> b) {
  Acc acc;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0.0) acc.add(a[i] * b[i]);
  return acc.value();
}

double l1_dist_scalar(std::span<const double> a, std::span<const double> b) {
  Acc acc;
  for (size_t i = 0; i < a.size(); ++i) acc.add(std::abs(a[i] - b[i]));
  return acc.value();
}

double max_value_scalar(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x)
    if (v > m) m = v;
  return m;
}

double masked_mass_scalar(std::span<const double> w, std::span<const double> x,
                          double threshold) {
  Acc acc;
  for (size_t i = 0; i < w.size(); ++i)
    if (x[i] <= threshold) acc.add(w[i]);
  return acc.value();
}

double weighted_sumsq_scalar(std::span<const double> w, std::span<const double> x) {
  Acc acc;
  for (size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) acc.add(w[i] * x[i] * x[i]);
  return acc.value();
}

}  // namespace detail

namespace {

std::atomic<bool> g_force_scalar{false};

bool avx2_available() {
#if defined(SPB_HAVE_AVX2_TU) && defined(__x86_64__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

bool env_forces_scalar() {
  const char* e = std::getenv("SPB_KERNELS");
  return e != nullptr && std::strcmp(e, "scalar") == 0;
}

bool use_avx2() {
  static const bool hw = avx2_available() && !env_forces_scalar();
  return hw && !g_force_scalar.load(std::memory_order_relaxed);
}

}  // namespace

Lane active_lane() { return use_avx2() ? Lane::avx2 : Lane::scalar; }

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

#if defined(SPB_HAVE_AVX2_TU)
#define SPB_DISPATCH(fn, ...) \
  return use_avx2() ? detail::fn##_avx2(__VA_ARGS__) : detail::fn##_scalar(__VA_ARGS__)
#else
#define SPB_DISPATCH(fn, ...) return detail::fn##_scalar(__VA_ARGS__)
#endif

double sum(std::span<const double> x) { SPB_DISPATCH(sum, x); }
double dot(std::span<const double> a, std::span<const double> b) { SPB_DISPATCH(dot, a, b); }
double l1_dist(std::span<const double> a, std::span<const double> b) {
  SPB_DISPATCH(l1_dist, a, b);
}
double max_value(std::span<const double> x) { SPB_DISPATCH(max_value, x); }
double masked_mass(std::span<const double> w, std::span<const double> x, double threshold) {
  SPB_DISPATCH(masked_mass, w, x, threshold);
}
double weighted_sumsq(std::span<const double> w, std::span<const double> x) {
  SPB_DISPATCH(weighted_sumsq, w, x);
}

#undef SPB_DISPATCH

}  // namespace spb::kernels
