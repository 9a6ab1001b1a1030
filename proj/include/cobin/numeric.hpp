#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace cobin::numeric {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(std::span<const double> v);

/// log of the standard normal CDF, accurate far into the lower tail.
double log_norm_cdf(double x);

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Standard normal quantile.
double norm_quantile(double p);

/// log(sinh(x) / x), with the removable singularity at 0.
inline double log_sinhc(double x) {
  x = std::fabs(x);
  if (x < 1e-4) return x * x / 6.0;
  if (x < 20.0) return std::log(std::sinh(x) / x);
  return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0 * x);
}

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace cobin::numeric
