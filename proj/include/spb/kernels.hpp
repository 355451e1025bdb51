#pragma once

#include <cstddef>
#include <span>

// Reduction kernels used by the probability and measure code. Every kernel has
// a compensated scalar reference implementation; on x86-64 with AVX2 a vector
// variant is selected at runtime. The two lanes agree to ~1e-15 relative and
// are equivalence-tested against each other.

namespace spb::kernels {

enum class Lane { scalar, avx2 };

/// Lane currently used by the dispatched entry points.
Lane active_lane();

/// Test hook: force the scalar lane on/off. Also honored at startup via the
/// SPB_KERNELS=scalar environment variable.
void force_scalar(bool on);

double sum(std::span<const double> x);
/// Weighted sum a.b. Entries with a[i] == 0 contribute zero even when b[i]
/// is infinite (measure convention: 0 times undefined is 0).
double dot(std::span<const double> a, std::span<const double> b);
double l1_dist(std::span<const double> a, std::span<const double> b);
double max_value(std::span<const double> x);
/// Sum of w[i] over indices with x[i] <= threshold.
double masked_mass(std::span<const double> w, std::span<const double> x, double threshold);
/// Sum of w[i] * x[i]^2; zero weights contribute zero (see dot).
double weighted_sumsq(std::span<const double> w, std::span<const double> x);

namespace detail {
double sum_scalar(std::span<const double> x);
double dot_scalar(std::span<const double> a, std::span<const double> b);
double l1_dist_scalar(std::span<const double> a, std::span<const double> b);
double max_value_scalar(std::span<const double> x);
double masked_mass_scalar(std::span<const double> w, std::span<const double> x, double threshold);
double weighted_sumsq_scalar(std::span<const double> w, std::span<const double> x);

#if defined(SPB_HAVE_AVX2_TU)
double sum_avx2(std::span<const double> x);
double dot_avx2(std::span<const double> a, std::span<const double> b);
double l1_dist_avx2(std::span<const double> a, std::span<const double> b);
double max_value_avx2(std::span<const double> x);
double masked_mass_avx2(std::span<const double> w, std::span<const double> x, double threshold);
double weighted_sumsq_avx2(std::span<const double> w, std::span<const double> x);
#endif
}  // namespace detail

}  // namespace spb::kernels
