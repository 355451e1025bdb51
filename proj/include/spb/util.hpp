#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spb {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Thrown when an operation would exceed its configured enumeration or
/// node-operation budget.
class budget_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown on malformed input files; carries 1-based line/column.
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& what, int line, int column)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Formats a double with 12 significant digits, '.' decimal separator,
/// independent of locale. Infinities print as "inf"/"-inf".
inline std::string fmt12(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// log(sum(exp(x))) with -inf entries ignored; returns -inf on empty input.
inline double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x)
    if (v > m) m = v;
  if (m == kNegInf) return kNegInf;
  double s = 0.0, c = 0.0;  // Neumaier
  for (double v : x) {
    double e = std::exp(v - m);
    double t = s + e;
    c += std::abs(s) >= std::abs(e) ? (s - t) + e : (e - t) + s;
    s = t;
  }
  return m + std::log(s + c);
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// FNV-1a over raw bytes; used for cache keys on channel matrices.
inline uint64_t fnv1a(const void* data, size_t bytes, uint64_t seed = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Results must be
/// written by index so output order stays deterministic. jobs <= 1 runs inline.
inline void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  size_t workers = std::min<size_t>(jobs, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<size_t> next{0};
  for (size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace spb
