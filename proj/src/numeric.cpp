#include "cobin/numeric.hpp"

#include <algorithm>

#include <boost/math/special_functions/erf.hpp>

namespace cobin::numeric {

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_norm_cdf(double x) {
  if (x > -8.0) return std::log(norm_cdf(x));
  // Mills ratio continued fraction, evaluated backwards.
  const double z = -x;
  double r = 0.0;
  for (int k = 80; k >= 1; --k) r = k / (z + r);
  double mills = 1.0 / (z + r);
  return -0.5 * z * z - kLogSqrt2Pi + std::log(mills);
}

double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace cobin::numeric
