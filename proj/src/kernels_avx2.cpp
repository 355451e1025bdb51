// AVX2 variants of the reduction kernels. Compiled with -mavx2 -mfma in this
// translation unit only; selection happens at runtime in kernels.cpp.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "spb/kernels.hpp"

namespace spb::kernels::detail {

namespace {

// 4-lane Neumaier accumulator.
struct VAcc {
  __m256d s = _mm256_setzero_pd();
  __m256d c = _mm256_setzero_pd();

  inline void add(__m256d v) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    __m256d t = _mm256_add_pd(s, v);
    __m256d as = _mm256_andnot_pd(sign, s);
    __m256d av = _mm256_andnot_pd(sign, v);
    __m256d big_s = _mm256_add_pd(_mm256_sub_pd(s, t), v);
    __m256d big_v = _mm256_add_pd(_mm256_sub_pd(v, t), s);
    __m256d take_s = _mm256_cmp_pd(as, av, _CMP_GE_OQ);
    c = _mm256_add_pd(c, _mm256_blendv_pd(big_v, big_s, take_s));
    s = t;
  }

  inline double value() const {
    alignas(32) double sv[4], cv[4];
    _mm256_store_pd(sv, s);
    _mm256_store_pd(cv, c);
    // Combine the four partial sums with a scalar Neumaier pass.
    double acc = 0.0, comp = 0.0;
    for (double x : {sv[0], sv[1], sv[2], sv[3], cv[0], cv[1], cv[2], cv[3]}) {
      double t = acc + x;
      comp += std::abs(acc) >= std::abs(x) ? (acc - t) + x : (x - t) + acc;
      acc = t;
    }
    return acc + comp;
  }
};

inline __m256d nonzero_mask(__m256d w) {
  return _mm256_cmp_pd(w, _mm256_setzero_pd(), _CMP_NEQ_OQ);
}

}  // namespace

double sum_avx2(std::span<const double> x) {
  VAcc acc;
  size_t i = 0, n = x.size();
  for (; i + 4 <= n; i += 4) acc.add(_mm256_loadu_pd(x.data() + i));
  double tail = acc.value(), comp = 0.0;
  for (; i < n; ++i) {
    double t = tail + x[i];
    comp += std::abs(tail) >= std::abs(x[i]) ? (tail - t) + x[i] : (x[i] - t) + tail;
    tail = t;
  }
  return tail + comp;
}

double dot_avx2(std::span<const double> a, std::span<const double> b) {
  VAcc acc;
  size_t i = 0, n = a.size();
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a.data() + i);
    __m256d vb = _mm256_loadu_pd(b.data() + i);
    __m256d prod = _mm256_and_pd(_mm256_mul_pd(va, vb), nonzero_mask(va));
    acc.add(prod);
  }
  double r = acc.value();
  for (; i < n; ++i)
    if (a[i] != 0.0) r += a[i] * b[i];
  return r;
}

double l1_dist_avx2(std::span<const double> a, std::span<const double> b) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  VAcc acc;
  size_t i = 0, n = a.size();
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    acc.add(_mm256_andnot_pd(sign, d));
  }
  double r = acc.value();
  for (; i < n; ++i) r += std::abs(a[i] - b[i]);
  return r;
}

double max_value_avx2(std::span<const double> x) {
  size_t i = 0, n = x.size();
  double m = -std::numeric_limits<double>::infinity();
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x.data());
    for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x.data() + i));
    alignas(32) double mv[4];
    _mm256_store_pd(mv, vm);
    m = std::max(std::max(mv[0], mv[1]), std::max(mv[2], mv[3]));
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double masked_mass_avx2(std::span<const double> w, std::span<const double> x,
                        double threshold) {
  const __m256d vt = _mm256_set1_pd(threshold);
  VAcc acc;
  size_t i = 0, n = w.size();
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x.data() + i);
    __m256d vw = _mm256_loadu_pd(w.data() + i);
    __m256d mask = _mm256_cmp_pd(vx, vt, _CMP_LE_OQ);
    acc.add(_mm256_and_pd(vw, mask));
  }
  double r = acc.value();
  for (; i < n; ++i)
    if (x[i] <= threshold) r += w[i];
  return r;
}

double weighted_sumsq_avx2(std::span<const double> w, std::span<const double> x) {
  VAcc acc;
  size_t i = 0, n = w.size();
  for (; i + 4 <= n; i += 4) {
    __m256d vw = _mm256_loadu_pd(w.data() + i);
    __m256d vx = _mm256_loadu_pd(x.data() + i);
    __m256d term = _mm256_and_pd(_mm256_mul_pd(vw, _mm256_mul_pd(vx, vx)), nonzero_mask(vw));
    acc.add(term);
  }
  double r = acc.value();
  for (; i < n; ++i)
    if (w[i] != 0.0) r += w[i] * x[i] * x[i];
  return r;
}

}  // namespace spb::kernels::detail
