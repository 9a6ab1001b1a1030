#pragma once

// Independent oracles shared by the unit and acceptance tests.

#include <functional>
#include <span>
#include <vector>

namespace testutil {

/// Adaptive Gauss-Kronrod on [a, b].
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13);

/// Gauss-Kronrod applied separately on each piece between sorted breakpoints.
double integrate_pieces(const std::function<double(double)>& f, double a, double b,
                        std::vector<double> breaks, double tol = 1e-12);

/// Points k / l in (0, 1) for l = 2..max_denominator: the kinks of cobin densities.
std::vector<double> lattice_breaks(int max_denominator);

/// Tanh-sinh on [a, b]; tolerates endpoint singularities.
double integrate_ts(const std::function<double(double)>& f, double a, double b, double tol = 1e-14);

/// Integral over [a, inf).
double integrate_inf(const std::function<double(double)>& f, double a, double tol = 1e-13);

struct KSResult {
  double d = 0.0;
  double p = 1.0;
};

/// One-sample Kolmogorov-Smirnov against a continuous CDF.
KSResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf);

/// Two-sample Kolmogorov-Smirnov.
KSResult ks_test2(std::vector<double> x, std::vector<double> y);

/// Asymptotic Kolmogorov tail probability P(K > lambda).
double kolmogorov_q(double lambda);

struct SWResult {
  double w = 0.0;
  double p = 1.0;
};

/// Shapiro-Wilk W with Royston's normalizing approximation (n in [12, 5000]).
SWResult shapiro_wilk(std::vector<double> x);

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double se = 0.0;  // standard error of the mean
};
Moments moments(std::span<const double> x);

}  // namespace testutil
