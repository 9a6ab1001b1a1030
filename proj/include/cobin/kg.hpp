#pragma once

// Kolmogorov-Gamma KG(b, c): sum_k eps_k / (2 pi^2 k^2 + c^2 / 2), eps_k ~ Gamma(b, 1).
// Exact sampling by the alternating series method with a GIG(-3/2) / exponential
// proposal split at a cutoff t.

#include <numbers>

#include "cobin/rng.hpp"

namespace cobin::kg {

inline constexpr double kDefaultCutoff = 0.050239;
/// Admissible cutoff range; outside it the series terms are not monotone.
inline const double kCutoffLower = std::numbers::ln2 / (3.0 * std::numbers::pi * std::numbers::pi);
inline constexpr double kCutoffUpper = 0.25;
/// Outer-loop cap. Reaching it means the envelope logic is broken.
inline constexpr int kMaxOuterIterations = 10000;

struct KGParams {
  int b = 1;
  double c = 0.0;

  void validate() const;
};

struct EnvelopeConfig {
  double t = kDefaultCutoff;

  /// Throws DomainError unless kCutoffLower < t < kCutoffUpper.
  void validate() const;
};

double kg_mean(const KGParams& p);

/// E exp(-s kappa) for kappa ~ KG(b, c), s >= 0.
double kg_laplace(const KGParams& p, double s);

/// a_n(x; c, t): the n-th term of the alternating series for the KG(1, c)
/// density, left form for x < t and right form otherwise.
double kg1_density_term(int n, double x, double c, const EnvelopeConfig& cfg);

/// KG(1, c) density, series summed to convergence.
double kg1_density(double x, double c);

/// KG(1, c) CDF, series of closed-form term integrals.
double kg1_cdf(double x, double c);

/// CDF of GIG(p = -3/2, a = c^2, b = 1/4); inverse gamma (3/2, 1/8) at c = 0.
double gig_half_cdf(double x, double c);
double gig_half_log_cdf(double x, double c);

/// Untruncated GIG(-3/2, c^2, 1/4) draw.
double gig_half_sample(double c, Rng& rng);

/// GIG(-3/2, c^2, 1/4) restricted to (0, t), by repeated draws.
double gig_half_sample_trunc(double c, double t, Rng& rng);

struct KGDraw {
  double value = 0.0;
  /// Proposals drawn, including the accepted one.
  int outer_iters = 0;
  /// Sum over proposals of the series index at which each was decided.
  int inner_terms = 0;
};

/// Precomputed mixture probability for a given (c, t). Reuse across draws with equal c.
struct KG1Proposal {
  double c = 0.0;
  double t = kDefaultCutoff;
  double prob_right = 0.0;
  double rate_right = 0.0;
};
KG1Proposal make_kg1_proposal(double c, const EnvelopeConfig& cfg);

KGDraw sample_kg1(double c, const EnvelopeConfig& cfg, Rng& rng);
KGDraw sample_kg1(const KG1Proposal& prop, Rng& rng);

/// Sum of b independent KG(1, c) draws.
double sample_kg(const KGParams& p, const EnvelopeConfig& cfg, Rng& rng);

/// Expected proposals per accepted draw, A^L + A^R.
double envelope_outer_mean(double c, const EnvelopeConfig& cfg);

/// Expected index m of the partial sum S_m at which a proposal is decided,
/// 1 + sum_{m >= 1} int a_m / M. KGDraw::inner_terms sums this index over proposals.
double envelope_inner_mean(double c, const EnvelopeConfig& cfg);

/// int a_n / M. For n >= 1 this is the chance a proposal is still undecided after S_{n-1}.
double envelope_term_mass(int n, double c, const EnvelopeConfig& cfg);

}  // namespace cobin::kg
