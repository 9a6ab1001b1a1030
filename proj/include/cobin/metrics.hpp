#pragma once

// Goodness of fit, predictive accuracy and MCMC diagnostics.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cobin/gibbs.hpp"

namespace cobin::eval {

/// Quantile residuals Phi^{-1}(F(y_i)) under cobin (dispersion
/// = lambda) or micobin (dispersion = psi) with canonical parameters theta.
/// F is clamped to [1e-300, 1 - 2^-53] so boundary responses stay finite.
Eigen::VectorXd quantile_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                                   gibbs::Family family, double dispersion);

/// log p(y_i | eta^(m), dispersion^(m)) for every draw m and point i (M x n).
/// eta holds canonical parameters (cobit link).
Eigen::MatrixXd pointwise_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& eta,
                                      const Eigen::VectorXd& dispersion, gibbs::Family family);

/// -(1/n) sum_i log{(1/M) sum_m p(y_i | theta^(m))} from the M x n log densities.
double neg_test_loglik(const Eigen::MatrixXd& log_density);

/// (1/n) sum_i (mu_i - mu_hat_i)^2.
double mspe(const Eigen::VectorXd& mu_true, const Eigen::VectorXd& mu_hat);

/// Multivariate effective sample size M (|Lambda| / |Sigma|)^{1/p}, Lambda the
/// sample covariance and Sigma the batch-means estimate (batch size floor(sqrt M)).
/// Throws DomainError for M < 10.
double multivariate_ess(const Eigen::MatrixXd& draws);

struct Waic {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};
/// -2 (lppd - p_waic), p_waic the summed pointwise variance of log densities.
Waic waic(const Eigen::MatrixXd& log_density);

/// Split R-hat per column across chains (each split in half).
Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains);

struct MetricReport {
  double bias = 0.0;
  double rmse = 0.0;
  std::optional<double> neg_test_ll;
  std::optional<double> mspe;
  std::optional<double> mess;
  std::optional<double> waic;
};

}  // namespace cobin::eval
