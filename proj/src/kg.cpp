#include "cobin/kg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cobin/error.hpp"
#include "cobin/numeric.hpp"

namespace cobin::kg {

using numeric::kNegInf;
using numeric::log_add_exp;
using numeric::log_norm_cdf;
using numeric::log_sinhc;
using std::numbers::pi;

namespace {

constexpr double kTwoPi2 = 2.0 * pi * pi;
constexpr double kLogSqrtPi = 0.57236494292470008707;
constexpr double kLogSqrt2Pi = numeric::kLogSqrt2Pi;

// Signed value carried as (log |v|, sign).
struct LogSigned {
  double log_abs = kNegInf;
  int sign = 1;
};

// log of int_0^x u^{-3/2} exp{-(r^2 u + s^2 / u) / 2} du
double log_j32(double x, double r, double s) {
  const double u = std::sqrt(x);
  const double a = r * u - s / u;
  const double b = r * u + s / u;
  return kLogSqrt2Pi - std::log(s) +
         log_add_exp(-r * s + log_norm_cdf(a), r * s + log_norm_cdf(-b));
}

// log of int_0^x u^{-5/2} exp{-(r^2 u + s^2 / u) / 2} du
double log_j52(double x, double r, double s) {
  const double u = std::sqrt(x);
  const double a = r * u - s / u;
  const double b = r * u + s / u;
  const double l1 = -r * s + log_norm_cdf(a) + std::log(1.0 / s + r);
  const double c2 = 1.0 / s - r;
  const double l2 = c2 == 0.0 ? kNegInf : r * s + log_norm_cdf(-b) + std::log(std::fabs(c2));
  const double l3 = std::log(2.0) - r * s - 0.5 * a * a - kLogSqrt2Pi - std::log(u);
  const double m = std::max({l1, l2, l3});
  if (m == kNegInf) return kNegInf;
  double v = std::exp(l1 - m) + std::exp(l3 - m);
  if (l2 != kNegInf) v += (c2 > 0 ? 1.0 : -1.0) * std::exp(l2 - m);
  if (v <= 0.0) return kNegInf;
  return kLogSqrt2Pi - 2.0 * std::log(s) + m + std::log(v);
}

// a_n / a_0 for the left (x < t) series
double left_ratio(int n, double x) {
  if (n % 2 == 1) return 4.0 * x * std::exp(-(double(n) * n - 1.0) / (8.0 * x));
  const double k = n + 1.0;
  return k * k * std::exp(-(k * k - 1.0) / (8.0 * x));
}

// a_n / a_0 for the right (x >= t) series
double right_ratio(int n, double x) {
  const double k = n + 1.0;
  return k * k * std::exp(-kTwoPi2 * (k * k - 1.0) * x);
}

// log a_n^L(x), untilted
double log_left_term(int n, double x) {
  if (n % 2 == 1) {
    return std::log(2.0) - kLogSqrtPi - 1.5 * std::log(2.0 * x) - double(n) * n / (8.0 * x);
  }
  const double k = n + 1.0;
  return 2.0 * std::log(k) - kLogSqrtPi - 2.5 * std::log(2.0 * x) - k * k / (8.0 * x);
}

// log a_n^R(x), untilted
double log_right_term(int n, double x) {
  const double k = n + 1.0;
  return std::log(4.0 * pi * pi) + 2.0 * std::log(k) - kTwoPi2 * k * k * x;
}

double signed_log_sum(const std::vector<double>& logs) {
  double m = kNegInf;
  for (double l : logs) m = std::max(m, l);
  if (m == kNegInf) return 0.0;
  numeric::CompensatedSum s;
  for (std::size_t n = 0; n < logs.size(); ++n) {
    const double v = std::exp(logs[n] - m);
    s.add(n % 2 == 0 ? v : -v);
  }
  return s.value() * std::exp(m);
}

}  // namespace

void KGParams::validate() const {
  if (b < 1) throw DomainError("kg: shape b must be a positive integer");
  if (!std::isfinite(c)) throw DomainError("kg: tilt c must be finite");
}

void EnvelopeConfig::validate() const {
  if (!(t > kCutoffLower && t < kCutoffUpper)) {
    throw DomainError("kg: cutoff t = " + std::to_string(t) + " outside admissible range (" +
                      std::to_string(kCutoffLower) + ", " + std::to_string(kCutoffUpper) + ")");
  }
}

double kg_mean(const KGParams& p) {
  p.validate();
  const double c = std::fabs(p.c);
  if (c < 1e-2) {
    const double c2 = c * c;
    return p.b * (1.0 / 12.0 - c2 / 720.0 + c2 * c2 / 30240.0);
  }
  const double h = 0.5 * c;
  return p.b * (h / std::tanh(h) - 1.0) / (c * c);
}

double kg_laplace(const KGParams& p, double s) {
  p.validate();
  if (s < 0.0) throw DomainError("kg: Laplace argument must be nonnegative");
  const double w = std::sqrt(0.25 * p.c * p.c + 0.5 * s);
  return std::exp(p.b * (log_sinhc(0.5 * p.c) - log_sinhc(w)));
}

double kg1_density_term(int n, double x, double c, const EnvelopeConfig& cfg) {
  cfg.validate();
  if (n < 0) throw DomainError("kg: series index must be nonnegative");
  if (!(x > 0.0)) throw DomainError("kg: density term requires x > 0");
  const double base = x < cfg.t ? log_left_term(n, x) : log_right_term(n, x);
  return std::exp(log_sinhc(0.5 * c) - 0.5 * c * c * x + base);
}

double kg1_density(double x, double c) {
  if (!(x > 0.0)) return 0.0;
  const bool left = x < kDefaultCutoff;
  std::vector<double> logs;
  for (int n = 0; n < 400; ++n) {
    logs.push_back(left ? log_left_term(n, x) : log_right_term(n, x));
    if (n > 2 && logs.back() < logs.front() - 45.0) break;
  }
  const double s = signed_log_sum(logs);
  if (s <= 0.0) return 0.0;
  return std::exp(log_sinhc(0.5 * c) - 0.5 * c * c * x + std::log(s));
}

double kg1_cdf(double x, double c) {
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double r = std::fabs(c);
  const double ls = log_sinhc(0.5 * c);
  std::vector<double> logs;
  if (x <= 0.1) {
    for (int n = 0; n < 400; ++n) {
      double l;
      if (n % 2 == 1) {
        l = std::log(2.0) - kLogSqrtPi - 1.5 * std::log(2.0) + log_j32(x, r, 0.5 * n);
      } else {
        const double k = n + 1.0;
        l = 2.0 * std::log(k) - kLogSqrtPi - 2.5 * std::log(2.0) + log_j52(x, r, 0.5 * k);
      }
      logs.push_back(ls + l);
      if (n > 2 && logs.back() < logs.front() - 45.0) break;
    }
    return std::clamp(signed_log_sum(logs), 0.0, 1.0);
  }
  for (int n = 0; n < 400; ++n) {
    const double k = n + 1.0;
    const double d = kTwoPi2 * k * k + 0.5 * c * c;
    logs.push_back(ls + std::log(4.0 * pi * pi) + 2.0 * std::log(k) - d * x - std::log(d));
    if (n > 2 && logs.back() < logs.front() - 45.0) break;
  }
  return std::clamp(1.0 - signed_log_sum(logs), 0.0, 1.0);
}

double gig_half_log_cdf(double x, double c) {
  if (!(x > 0.0)) return kNegInf;
  if (std::isinf(x)) return 0.0;
  const double r = std::fabs(c);
  const double s = 0.5;
  const double log_total = kLogSqrt2Pi - 2.0 * std::log(s) - r * s + std::log(1.0 / s + r);
  return std::min(0.0, log_j52(x, r, s) - log_total);
}

double gig_half_cdf(double x, double c) { return std::exp(gig_half_log_cdf(x, c)); }

double gig_half_sample(double c, Rng& rng) {
  // 1/X ~ GIG(3/2, 1/4, c^2) = IG(2|c|, c^2) + Gamma(k, scale 8),
  // k = 1 w.p. z/(z + 1), k = 3/2 otherwise, z = |c|/2.
  const double r = std::fabs(c);
  if (r == 0.0) return 1.0 / (8.0 * rng.gamma(1.5));
  const double z = 0.5 * r;
  const double ig = rng.inverse_gaussian(2.0 * r, r * r);
  const double k = rng.uniform() < z / (z + 1.0) ? 1.0 : 1.5;
  return 1.0 / (ig + 8.0 * rng.gamma(k));
}

double gig_half_sample_trunc(double c, double t, Rng& rng) {
  for (int it = 0; it < 1000000; ++it) {
    const double x = gig_half_sample(c, rng);
    if (x < t) return x;
  }
  throw NumericalError("kg: truncated GIG sampler did not terminate");
}

KG1Proposal make_kg1_proposal(double c, const EnvelopeConfig& cfg) {
  cfg.validate();
  KG1Proposal p;
  p.c = c;
  p.t = cfg.t;
  const double r = std::fabs(c);
  p.rate_right = kTwoPi2 + 0.5 * c * c;
  const double log_al = std::log(r + 2.0) - 0.5 * r + gig_half_log_cdf(cfg.t, c);
  const double log_ar = std::log(4.0 * pi * pi) - p.rate_right * cfg.t - std::log(p.rate_right);
  p.prob_right = 1.0 / (1.0 + std::exp(log_al - log_ar));
  return p;
}

KGDraw sample_kg1(const KG1Proposal& prop, Rng& rng) {
  KGDraw out;
  for (int outer = 1; outer <= kMaxOuterIterations; ++outer) {
    double x;
    bool right;
    if (rng.uniform() < prop.prob_right) {
      x = prop.t + rng.exponential() / prop.rate_right;
      right = true;
    } else {
      x = gig_half_sample_trunc(prop.c, prop.t, rng);
      right = false;
    }
    // a_0 scaled to one: S and Y are relative to a_0(x)
    const double y = rng.uniform();
    double s = 1.0;
    int m = 0;
    bool accept = false;
    for (;;) {
      ++m;
      const double term = right ? right_ratio(m, x) : left_ratio(m, x);
      if (m % 2 == 1) {
        s -= term;
        if (y < s) {
          accept = true;
          break;
        }
      } else {
        s += term;
        if (y > s) break;
      }
      if (m > 1000) throw NumericalError("kg: inner series did not decide");
    }
    out.inner_terms += m;
    if (accept) {
      out.value = x;
      out.outer_iters = outer;
      return out;
    }
  }
  throw NumericalError("kg: outer loop exceeded " + std::to_string(kMaxOuterIterations) +
                       " proposals at c = " + std::to_string(prop.c));
}

KGDraw sample_kg1(double c, const EnvelopeConfig& cfg, Rng& rng) {
  return sample_kg1(make_kg1_proposal(c, cfg), rng);
}

double sample_kg(const KGParams& p, const EnvelopeConfig& cfg, Rng& rng) {
  p.validate();
  const KG1Proposal prop = make_kg1_proposal(p.c, cfg);
  double s = 0.0;
  for (int i = 0; i < p.b; ++i) s += sample_kg1(prop, rng).value;
  return s;
}

double envelope_outer_mean(double c, const EnvelopeConfig& cfg) {
  cfg.validate();
  const double r = std::fabs(c);
  const double rate = kTwoPi2 + 0.5 * c * c;
  const double log_al = std::log(r + 2.0) - 0.5 * r + gig_half_log_cdf(cfg.t, c);
  const double log_ar = std::log(4.0 * pi * pi) - rate * cfg.t - std::log(rate);
  return std::exp(log_sinhc(0.5 * c) + log_add_exp(log_al, log_ar));
}

namespace {

// log int_0^inf a_n(x; c, t) dx
double log_term_integral(int n, double c, double t) {
  const double r = std::fabs(c);
  double left;
  if (n % 2 == 1) {
    left = std::log(2.0) - kLogSqrtPi - 1.5 * std::log(2.0) + log_j32(t, r, 0.5 * n);
  } else {
    const double k = n + 1.0;
    left = 2.0 * std::log(k) - kLogSqrtPi - 2.5 * std::log(2.0) + log_j52(t, r, 0.5 * k);
  }
  const double k = n + 1.0;
  const double d = kTwoPi2 * k * k + 0.5 * c * c;
  const double right = std::log(4.0 * pi * pi) + 2.0 * std::log(k) - d * t - std::log(d);
  return log_sinhc(0.5 * c) + log_add_exp(left, right);
}

// sum_{n >= first} int a_n / M
double tail_term_mass(int first, double c, const EnvelopeConfig& cfg) {
  const double log_m = std::log(envelope_outer_mean(c, cfg));
  double total = 0.0;
  for (int n = first; n < 60; ++n) {
    const double add = std::exp(log_term_integral(n, c, cfg.t) - log_m);
    total += add;
    if (add < 1e-18) break;
  }
  return total;
}

}  // namespace

double envelope_inner_mean(double c, const EnvelopeConfig& cfg) {
  cfg.validate();
  return 1.0 + tail_term_mass(1, c, cfg);
}

double envelope_term_mass(int n, double c, const EnvelopeConfig& cfg) {
  cfg.validate();
  if (n < 0) throw DomainError("kg: series index must be nonnegative");
  return std::exp(log_term_integral(n, c, cfg.t) - std::log(envelope_outer_mean(c, cfg)));
}

}  // namespace cobin::kg
