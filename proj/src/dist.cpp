#include "cobin/dist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/special_functions/bernoulli.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cobin/error.hpp"
#include "cobin/numeric.hpp"

namespace cobin::dist {

using numeric::kNegInf;

namespace {

// The direct sums switch to cancellation-free evaluation once this many
// digits are lost; the residual error is then around 1e-13.
constexpr double kSwitchDigits = 3.0;

constexpr int kSeriesTerms = 10;

// The positive CDF series needs about |theta| lambda z terms; below this it is
// cheaper than the incomplete-gamma sum.
constexpr double kSeriesWork = 200.0;

// Coefficients of coth(x) - 1/x = sum_n c_n x^(2n-1), c_n = 2^(2n) B_(2n) / (2n)!.
const std::array<double, kSeriesTerms>& langevin_coefficients() {
  static const std::array<double, kSeriesTerms> c = [] {
    std::array<double, kSeriesTerms> out{};
    for (int n = 1; n <= kSeriesTerms; ++n) {
      out[n - 1] = std::ldexp(boost::math::bernoulli_b2n<double>(n), 2 * n) /
                   boost::math::factorial<double>(2 * n);
    }
    return out;
  }();
  return c;
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log P(a, x), regularized lower incomplete gamma, accurate when P underflows.
double log_gamma_p(int a, double x) {
  if (x <= 0.0) return kNegInf;
  double p = boost::math::gamma_p(static_cast<double>(a), x);
  if (p > 1e-250) return std::log(p);
  double term = 1.0;
  double sum = 1.0;
  for (int j = 1; j < 10000; ++j) {
    term *= x / (a + j);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return a * std::log(x) - x - std::lgamma(a + 1.0) + std::log(sum);
}

// Irwin-Hall densities f_j(x - k), k = 0..K, for the sum of j uniforms, advanced
// one order at a time by f_j(s) = [s f_{j-1}(s) + (j - s) f_{j-1}(s - 1)] / (j - 1).
// Every term is nonnegative. Values are v[k] * exp(log_scale).
class IrwinHallLadder {
 public:
  explicit IrwinHallLadder(double x) : x_(x) {
    const int kmax = static_cast<int>(std::ceil(x)) - 1;
    v_.assign(std::max(kmax, 0) + 2, 0.0);
    for (int k = 0; k <= kmax; ++k) {
      const double s = x - k;
      if (s > 0.0 && s <= 1.0) v_[k] = 1.0;
    }
  }

  int order() const { return order_; }
  int size() const { return static_cast<int>(v_.size()) - 1; }
  double value(int k) const { return v_[k]; }
  double log_scale() const { return log_scale_; }

  void advance() {
    const int j = ++order_;
    const double inv = 1.0 / (j - 1);
    double mx = 0.0;
    const int n = size();
    for (int k = 0; k < n; ++k) {
      const double s = x_ - k;
      double next = s * v_[k];
      if (v_[k + 1] != 0.0) next += (j - s) * v_[k + 1];
      v_[k] = next * inv;
      mx = std::max(mx, v_[k]);
    }
    if (mx > 0.0 && (mx < 1e-200 || mx > 1e200)) {
      const double f = 1.0 / mx;
      for (int k = 0; k < n; ++k) v_[k] *= f;
      log_scale_ += std::log(mx);
    }
  }

 private:
  double x_;
  int order_ = 1;
  double log_scale_ = 0.0;
  std::vector<double> v_;
};

// log int_0^x f_lambda(s) e^{theta s} ds for theta <= 0, x = lambda z.
// Repeated integration by parts gives e^{theta x} sum_m |theta|^m F_{m+1}(x),
// where F_{m+1} is the (m+1)-fold integral of f_lambda, itself a positive sum
// sum_k C(m+k, k) f_{lambda+m+1}(x - k). All terms are positive.
double tilted_irwin_hall_log_integral(double x, double theta, int lambda) {
  IrwinHallLadder lad(x);
  while (lad.order() < lambda) lad.advance();
  const int n = lad.size();
  std::vector<double> coef(n, 1.0);  // C(m + k, k)
  double coef_log_scale = 0.0;
  const double a = -theta;
  const double log_a = a > 0.0 ? std::log(a) : kNegInf;
  const double mode = a * x;
  double acc = kNegInf;
  for (int m = 0;; ++m) {
    lad.advance();  // order lambda + m + 1
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += coef[k] * lad.value(k);
    if (s > 0.0) {
      const double lt =
          (m == 0 ? 0.0 : m * log_a) + std::log(s) + lad.log_scale() + coef_log_scale;
      acc = numeric::log_add_exp(acc, lt);
      if (a == 0.0) break;
      if (m > mode + 2.0 && lt < acc - 40.0) break;
    } else if (m > mode + 2.0) {
      break;
    }
    if (m > 100000) throw NumericalError("dist: tilted CDF series did not converge");
    double mx = 0.0;
    for (int k = 0; k < n; ++k) {
      coef[k] *= static_cast<double>(m + 1 + k) / (m + 1);
      mx = std::max(mx, coef[k]);
    }
    if (mx > 1e250) {
      for (double& c : coef) c /= mx;
      coef_log_scale += std::log(mx);
    }
  }
  return theta * x + acc;
}

// k-th term of the incomplete-gamma representation of the cobin CDF, log scale,
// for theta <= 0 and x = lambda z > k.
double cdf_term_log(int lambda, int k, double x, double theta) {
  if (theta == 0.0) {
    return log_choose(lambda, k) + lambda * std::log(x - k) - std::lgamma(lambda + 1.0);
  }
  return log_choose(lambda, k) + theta * k + log_gamma_p(lambda, -theta * (x - k)) -
         lambda * std::log(-std::expm1(theta));
}

// CDF for lambda >= 2 and theta <= 0.
double cobin_cdf_nonpositive(double z, double theta, int lambda) {
  const double x = lambda * z;
  if (x <= 0.0) return 0.0;
  if (-theta * x <= kSeriesWork) {
    return std::clamp(
        std::exp(tilted_irwin_hall_log_integral(x, theta, lambda) - lambda * log_partition(theta)),
        0.0, 1.0);
  }
  const int kmax = std::min(lambda, static_cast<int>(std::ceil(x)) - 1);
  std::vector<double> logs;
  logs.reserve(kmax + 1);
  double m = kNegInf;
  for (int k = 0; k <= kmax; ++k) {
    if (x - k <= 0.0) break;
    logs.push_back(cdf_term_log(lambda, k, x, theta));
    m = std::max(m, logs.back());
  }
  if (m == kNegInf) return 0.0;
  numeric::CompensatedSum sum;
  double abs_sum = 0.0;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    const double t = std::exp(logs[k] - m);
    sum.add(k % 2 == 0 ? t : -t);
    abs_sum += t;
  }
  const double s = sum.value();
  const double value = s * std::exp(m);
  if (logs.size() == 1) return std::clamp(value, 0.0, 1.0);
  if (s <= 0.0 || std::log10(abs_sum / s) > kSwitchDigits || value > 1.0 + 1e-12) {
    return std::clamp(
        std::exp(tilted_irwin_hall_log_integral(x, theta, lambda) - lambda * log_partition(theta)),
        0.0, 1.0);
  }
  return std::clamp(value, 0.0, 1.0);
}

void check_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError(std::string("dist: ") + what + " must lie in [0, 1], got " +
                      std::to_string(v));
  }
}

}  // namespace

void CobinParams::validate() const {
  if (lambda < 1) throw DomainError("dist: cobin lambda must be a positive integer");
  if (!std::isfinite(theta)) throw DomainError("dist: cobin theta must be finite");
}

void MicobinParams::validate() const {
  if (!(psi > 0.0 && psi < 1.0)) throw DomainError("dist: micobin psi must lie in (0, 1)");
  if (!std::isfinite(theta)) throw DomainError("dist: micobin theta must be finite");
}

CumulantTriple cumulant(double theta) {
  CumulantTriple out;
  const double a = std::fabs(theta);
  if (a < kCumulantSeriesThreshold) {
    const auto& c = langevin_coefficients();
    const double x = 0.5 * theta;
    const double x2 = x * x;
    double lang = 0.0;   // coth x - 1/x
    double dlang = 0.0;  // its derivative
    double lsinhc = 0.0;
    for (int n = kSeriesTerms; n >= 1; --n) {
      lang = lang * x2 + c[n - 1];
      dlang = dlang * x2 + c[n - 1] * (2 * n - 1);
      lsinhc = lsinhc * x2 + c[n - 1] / (2 * n);
    }
    lang *= x;
    lsinhc *= x2;
    out.b = x + lsinhc;
    out.bp = 0.5 + 0.5 * lang;
    out.bpp = 0.25 * dlang;
    return out;
  }
  const double em = -std::expm1(-a);  // 1 - e^{-|theta|}
  const double bp_pos = 1.0 / em - 1.0 / a;
  out.bp = theta > 0 ? bp_pos : 1.0 - bp_pos;
  out.b = theta > 0 ? theta + std::log(em) - std::log(theta) : std::log(em) - std::log(a);
  out.bpp = 1.0 / (a * a) - std::exp(-a) / (em * em);
  return out;
}

double log_partition(double theta) { return cumulant(theta).b; }

double cobit_link(double mu) {
  if (!(mu > 0.0 && mu < 1.0)) {
    throw DomainError("dist: cobit link requires mu in (0, 1), got " + std::to_string(mu));
  }
  if (mu == 0.5) return 0.0;
  if (mu < 0.5) return -cobit_link(1.0 - mu);

  // B'(theta) >= 1 - 1/theta bounds the root from above.
  double lo = 0.0;
  double hi = 1.0 / (1.0 - mu);
  double theta = std::clamp(3.0 * std::log(mu / (1.0 - mu)), lo, hi);
  for (int it = 0; it < 200; ++it) {
    const CumulantTriple k = cumulant(theta);
    const double f = k.bp - mu;
    if (std::fabs(f) < 1e-14) return theta;
    if (f > 0.0)
      hi = theta;
    else
      lo = theta;
    double next = theta - f / k.bpp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - theta) <= 1e-15 * std::max(1.0, std::fabs(theta))) return next;
    theta = next;
  }
  return theta;
}

double variance_function(double mu) { return cumulant(cobit_link(mu)).bpp; }

IrwinHallEval irwin_hall_signed_sum(double y, int lambda) {
  if (lambda < 1) throw DomainError("dist: lambda must be a positive integer");
  check_unit_interval(y, "y");
  IrwinHallEval out;
  if (lambda == 1) return out;
  const double x = lambda * std::min(y, 1.0 - y);
  if (x <= 0.0) {
    out.log_value = kNegInf;
    return out;
  }
  std::vector<double> logs;
  double m = kNegInf;
  double log_c = 0.0;  // log C(lambda, k), built multiplicatively
  for (int k = 0; k <= lambda && x - k > 0.0; ++k) {
    if (k > 0) log_c += std::log(static_cast<double>(lambda - k + 1) / k);
    logs.push_back(log_c + (lambda - 1) * std::log(x - k));
    m = std::max(m, logs.back());
  }
  numeric::CompensatedSum sum;
  double abs_sum = 0.0;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    const double t = std::exp(logs[k] - m);
    sum.add(k % 2 == 0 ? t : -t);
    abs_sum += t;
  }
  const double s = sum.value();
  if (!(s > 0.0)) {
    out.unstable = true;
    out.cancellation_digits = std::numeric_limits<double>::infinity();
    out.log_value = kNegInf;
    return out;
  }
  out.cancellation_digits = std::log10(abs_sum / s);
  out.unstable = out.cancellation_digits > kUnstableDigits;
  out.log_value = std::log(static_cast<double>(lambda)) - std::lgamma(static_cast<double>(lambda)) +
                  m + std::log(s);
  return out;
}

double irwin_hall_recurrence_log(double y, int lambda) {
  if (lambda < 1) throw DomainError("dist: lambda must be a positive integer");
  check_unit_interval(y, "y");
  if (lambda == 1) return 0.0;
  const double x = lambda * std::min(y, 1.0 - y);
  if (x <= 0.0) return kNegInf;
  IrwinHallLadder lad(x);
  while (lad.order() < lambda) lad.advance();
  if (lad.value(0) <= 0.0) return kNegInf;
  return std::log(static_cast<double>(lambda)) + std::log(lad.value(0)) + lad.log_scale();
}

double irwin_hall_scaled_log_density(double y, int lambda) {
  const IrwinHallEval direct = irwin_hall_signed_sum(y, lambda);
  if (direct.cancellation_digits <= kSwitchDigits) return direct.log_value;
  return irwin_hall_recurrence_log(y, lambda);
}

std::vector<double> irwin_hall_log_table(double y, int max_lambda) {
  std::vector<double> out(max_lambda);
  for (int l = 1; l <= max_lambda; ++l) out[l - 1] = irwin_hall_scaled_log_density(y, l);
  return out;
}

double cobin_log_density(double y, const CobinParams& p) {
  p.validate();
  check_unit_interval(y, "y");
  const double lh = irwin_hall_scaled_log_density(y, p.lambda);
  if (lh == kNegInf) return kNegInf;
  return lh + p.lambda * (p.theta * y - log_partition(p.theta));
}

double cobin_cdf(double z, const CobinParams& p) {
  p.validate();
  check_unit_interval(z, "z");
  if (z == 0.0) return 0.0;
  if (z == 1.0) return 1.0;
  const double theta = p.theta;
  if (p.lambda == 1) {
    if (theta == 0.0) return z;
    if (theta < 0.0) return std::expm1(theta * z) / std::expm1(theta);
    return std::exp(theta * (z - 1.0)) * std::expm1(-theta * z) / std::expm1(-theta);
  }
  if (theta > 0.0) return 1.0 - cobin_cdf_nonpositive(1.0 - z, -theta, p.lambda);
  return cobin_cdf_nonpositive(z, theta, p.lambda);
}

double cobin1_quantile(double u, double theta) {
  if (theta == 0.0) return u;
  double y;
  if (theta < 0.0) {
    y = std::log1p(u * std::expm1(theta)) / theta;
  } else {
    // 1 + log(u + (1 - u) e^{-theta}) / theta, safe for large theta
    y = 1.0 + std::log(u + (1.0 - u) * std::exp(-theta)) / theta;
  }
  return std::clamp(y, 0.0, 1.0);
}

double cobin_quantile(double u, const CobinParams& p) {
  p.validate();
  check_unit_interval(u, "u");
  if (p.lambda == 1) return cobin1_quantile(u, p.theta);
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (cobin_cdf(mid, p) < u)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double cobin_sample(const CobinParams& p, Rng& rng) {
  double s = 0.0;
  for (int l = 0; l < p.lambda; ++l) s += cobin1_quantile(rng.uniform(), p.theta);
  return s / p.lambda;
}

double micobin_log_weight(int l, double psi) {
  return std::log(static_cast<double>(l)) + (l - 1) * std::log1p(-psi) + 2.0 * std::log(psi);
}

double micobin_truncation_remainder(double psi, int trunc) {
  // P(X >= trunc), X = lambda - 1 = failures before the second success:
  // at most one success among the first trunc + 1 trials
  return std::exp((trunc + 1.0) * std::log1p(-psi)) +
         (trunc + 1.0) * psi * std::exp(trunc * std::log1p(-psi));
}

double micobin_log_density(double y, const MicobinParams& p, int trunc) {
  p.validate();
  check_unit_interval(y, "y");
  if (trunc < 1) throw DomainError("dist: micobin truncation must be >= 1");
  const double b = log_partition(p.theta);
  std::vector<double> logs;
  logs.reserve(trunc);
  for (int l = 1; l <= trunc; ++l) {
    const double lh = irwin_hall_scaled_log_density(y, l);
    if (lh == kNegInf) continue;
    logs.push_back(micobin_log_weight(l, p.psi) + lh + l * (p.theta * y - b));
  }
  return numeric::log_sum_exp(logs);
}

double micobin_cdf(double z, const MicobinParams& p, int trunc) {
  p.validate();
  check_unit_interval(z, "z");
  if (trunc < 1) throw DomainError("dist: micobin truncation must be >= 1");
  numeric::CompensatedSum sum;
  for (int l = 1; l <= trunc; ++l) {
    const double w = std::exp(micobin_log_weight(l, p.psi));
    if (w < 1e-18) continue;
    sum.add(w * cobin_cdf(z, CobinParams{p.theta, l}));
  }
  return std::clamp(sum.value(), 0.0, 1.0);
}

int micobin_sample_lambda(double psi, Rng& rng) {
  return 1 + static_cast<int>(rng.negative_binomial(2, psi));
}

double micobin_sample(const MicobinParams& p, Rng& rng) {
  const int lambda = micobin_sample_lambda(p.psi, rng);
  return cobin_sample(CobinParams{p.theta, lambda}, rng);
}

std::vector<double> default_lambda_log_prior(int L) {
  if (L < 1) throw DomainError("dist: lambda truncation L must be >= 1");
  std::vector<double> out(L);
  for (int l = 1; l <= L; ++l) {
    out[l - 1] = std::log(36.0) + std::log(static_cast<double>(l)) -
                 std::log((l + 1.0) * (l + 2.0) * (l + 3.0) * (l + 4.0));
  }
  const double norm = numeric::log_sum_exp(out);
  for (double& v : out) v -= norm;
  return out;
}

QuadratureRule gauss_legendre_unit(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

}  // namespace cobin::dist
