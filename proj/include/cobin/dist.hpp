#pragma once

// Continuous binomial (cobin) and mixture-of-cobin (micobin) distributions on [0, 1].
//
//   p_cobin(y; theta, 1/lambda) = h(y, lambda) exp{lambda (theta y - B(theta))}
//   B(theta) = log{(e^theta - 1) / theta}
//
// h(y, lambda) is the Irwin-Hall density of a sum of lambda uniforms, rescaled
// to [0, 1]. micobin mixes cobin over lambda with (lambda - 1) ~ negbin(2, psi).

#include <span>
#include <vector>

#include "cobin/rng.hpp"

namespace cobin::dist {

/// Default truncation of the lambda series (matches the Gibbs sampler's L).
inline constexpr int kDefaultTrunc = 70;

struct CobinParams {
  double theta = 0.0;
  int lambda = 1;

  /// Throws DomainError unless lambda >= 1 and theta is finite.
  void validate() const;
};

struct MicobinParams {
  double theta = 0.0;
  double psi = 0.5;

  void validate() const;
};

/// B(theta), B'(theta) (the mean) and B''(theta) (the unit variance).
struct CumulantTriple {
  double b = 0.0;
  double bp = 0.5;
  double bpp = 1.0 / 12.0;
};

/// Series branch is used for |theta| below this value.
inline constexpr double kCumulantSeriesThreshold = 1.0;

CumulantTriple cumulant(double theta);

/// B(theta) alone; cheaper than cumulant() when only the log-partition is needed.
double log_partition(double theta);

/// Inverse cobit link: the mean B'(eta).
inline double cobit_inverse(double eta) { return cumulant(eta).bp; }

/// Canonical (cobit) link: theta with B'(theta) = mu. Domain error outside (0, 1).
double cobit_link(double mu);

/// V(mu) = B''((B')^{-1}(mu)); maximum 1/12 at mu = 1/2.
double variance_function(double mu);

/// Result of the direct alternating-sum evaluation of h(y, lambda).
struct IrwinHallEval {
  double log_value = 0.0;
  /// log10(sum |terms| / |sum|): digits lost to cancellation.
  double cancellation_digits = 0.0;
  /// Set when more than kUnstableDigits were lost (or the sum came out <= 0).
  bool unstable = false;
};

inline constexpr double kUnstableDigits = 10.0;

/// Direct formula with compensated summation. Reports the cancellation it hit.
IrwinHallEval irwin_hall_signed_sum(double y, int lambda);

/// log h(y, lambda) evaluated through the all-positive Irwin-Hall recurrence.
/// O(lambda^2) but free of cancellation.
double irwin_hall_recurrence_log(double y, int lambda);

/// log h(y, lambda). Uses the direct sum and switches to the recurrence when
/// the direct sum loses more than a few digits. -inf at y in {0, 1} for lambda >= 2.
double irwin_hall_scaled_log_density(double y, int lambda);

/// log h(y, l) for l = 1..max_lambda, index l - 1.
std::vector<double> irwin_hall_log_table(double y, int max_lambda);

double cobin_log_density(double y, const CobinParams& p);

/// Same density with log h supplied by the caller (hot loops cache it).
inline double cobin_log_density_cached(double y, double log_h, double theta, int lambda,
                                       double b_theta) {
  return log_h + lambda * (theta * y - b_theta);
}

double cobin_cdf(double z, const CobinParams& p);
double cobin_quantile(double u, const CobinParams& p);
double cobin_sample(const CobinParams& p, Rng& rng);

/// Inverse CDF of cobin(theta, 1), the building block of cobin_sample.
double cobin1_quantile(double u, double theta);

/// Mixture weight l (1 - psi)^(l - 1) psi^2 on the log scale.
double micobin_log_weight(int l, double psi);

/// P(lambda > trunc) under (lambda - 1) ~ negbin(2, psi): the mass dropped by truncation.
double micobin_truncation_remainder(double psi, int trunc);

double micobin_log_density(double y, const MicobinParams& p, int trunc = kDefaultTrunc);
double micobin_cdf(double z, const MicobinParams& p, int trunc = kDefaultTrunc);
double micobin_sample(const MicobinParams& p, Rng& rng);

/// Draw the latent lambda of a micobin variate: 1 + negbin(2, psi).
int micobin_sample_lambda(double psi, Rng& rng);

/// Default cobin dispersion prior p(l) proportional to 36 l Gamma(l+1)/Gamma(l+5),
/// truncated to {1..L} and renormalized. Returned on the log scale.
std::vector<double> default_lambda_log_prior(int L);

/// Gauss-Legendre nodes and weights on [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_legendre_unit(int n);

}  // namespace cobin::dist
