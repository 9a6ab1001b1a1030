#include "testutil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace testutil {

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 10, tol, &err);
}

double integrate_pieces(const std::function<double(double)>& f, double a, double b,
                        std::vector<double> breaks, double tol) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = breaks[i];
    const double hi = breaks[i + 1];
    if (lo < a || hi > b || hi <= lo) continue;
    total += integrate(f, lo, hi, tol);
  }
  return total;
}

std::vector<double> lattice_breaks(int max_denominator) {
  std::vector<double> out;
  for (int l = 2; l <= max_denominator; ++l)
    for (int k = 1; k < l; ++k) out.push_back(static_cast<double>(k) / l);
  std::sort(out.begin(), out.end());
  return out;
}

double integrate_ts(const std::function<double(double)>& f, double a, double b, double tol) {
  boost::math::quadrature::tanh_sinh<double> ts(15);
  return ts.integrate(f, a, b, tol);
}

double integrate_inf(const std::function<double(double)>& f, double a, double tol) {
  boost::math::quadrature::exp_sinh<double> es(12);
  return es.integrate([&](double x) { return f(a + x); }, 0.0,
                      std::numeric_limits<double>::infinity(), tol);
}

double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double t = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 2.0 : -2.0) * t;
    if (t < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KSResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

KSResult ks_test2(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::fabs(i / n - j / m));
  }
  const double ne = std::sqrt(n * m / (n + m));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

SWResult shapiro_wilk(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 12 || n > 5000) throw std::invalid_argument("shapiro_wilk: n must be in [12, 5000]");
  std::sort(x.begin(), x.end());
  boost::math::normal_distribution<double> nd;
  std::vector<double> m(n);
  double mm = 0.0;
  for (int i = 0; i < n; ++i) {
    m[i] = boost::math::quantile(nd, (i + 1 - 0.375) / (n + 0.25));
    mm += m[i] * m[i];
  }
  const double u = 1.0 / std::sqrt(static_cast<double>(n));
  const double cn = m[n - 1] / std::sqrt(mm);
  const double cn1 = m[n - 2] / std::sqrt(mm);
  const double an = cn + 0.221157 * u - 0.147981 * u * u - 2.071190 * std::pow(u, 3) +
                    4.434685 * std::pow(u, 4) - 2.706056 * std::pow(u, 5);
  const double an1 = cn1 + 0.042981 * u - 0.293762 * u * u - 1.752461 * std::pow(u, 3) +
                     5.682633 * std::pow(u, 4) - 3.582633 * std::pow(u, 5);
  const double phi = (mm - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                     (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
  std::vector<double> a(n);
  for (int i = 0; i < n; ++i) a[i] = m[i] / std::sqrt(phi);
  a[n - 1] = an;
  a[n - 2] = an1;
  a[0] = -an;
  a[1] = -an1;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  double num = 0.0;
  for (int i = 0; i < n; ++i) {
    ss += (x[i] - mean) * (x[i] - mean);
    num += a[i] * x[i];
  }
  SWResult r;
  r.w = std::min(1.0, num * num / ss);
  const double ln = std::log(static_cast<double>(n));
  const double mu = 0.0038915 * ln * ln * ln - 0.083751 * ln * ln - 0.31082 * ln - 1.5861;
  const double sigma = std::exp(0.0030302 * ln * ln - 0.082676 * ln - 0.4803);
  const double z = (std::log(1.0 - r.w) - mu) / sigma;
  r.p = boost::math::cdf(boost::math::complement(nd, z));
  return r;
}

Moments moments(std::span<const double> x) {
  Moments out;
  const double n = static_cast<double>(x.size());
  for (double v : x) out.mean += v;
  out.mean /= n;
  for (double v : x) out.var += (v - out.mean) * (v - out.mean);
  out.var /= (n - 1.0);
  out.se = std::sqrt(out.var / n);
  return out;
}

}  // namespace testutil
