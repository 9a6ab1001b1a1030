#pragma once

// Point estimation for cobin regression: maximum likelihood by IRLS and the
// posterior mode by EM on the Kolmogorov-Gamma augmentation.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cobin::glm {

enum class Link { cobit, logit };

Link parse_link(const std::string& s);
std::string link_name(Link link);

struct RegressionModel {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Link link = Link::cobit;
  /// Prior covariance of beta (zero mean). Absent means a flat prior.
  std::optional<Eigen::MatrixXd> prior_cov;

  /// Shapes, finiteness, y in [0, 1], n >= p. Throws DomainError.
  void validate() const;
  bool has_boundary() const;
};

struct FitOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

struct FitResult {
  Eigen::VectorXd beta;
  std::optional<int> lambda;
  int iterations = 0;
  bool converged = false;
  /// sum_i lambda (y_i theta_i - B(theta_i)), lambda = 1 when not set.
  double loglik = 0.0;
  double grad_norm = 0.0;
  /// Objective after every iteration (EM: log posterior up to a constant).
  std::vector<double> trace;
};

/// Canonical parameter theta(eta) under the link.
double theta_of_eta(double eta, Link link);
/// Mean mu(eta) under the link.
double mean_of_eta(double eta, Link link);

/// sum_i (y_i theta_i - B(theta_i)); multiply by lambda for the full kernel.
double loglik_kernel(const RegressionModel& m, const Eigen::VectorXd& beta);

/// Gradient of loglik_kernel.
Eigen::VectorXd score(const RegressionModel& m, const Eigen::VectorXd& beta);

/// Fisher scoring with step halving; the estimate does not depend on lambda.
/// Converged means ||score|| < tol. Throws DomainError on a rank-deficient design.
FitResult irls_fit(const RegressionModel& m, const FitOptions& opt = {},
                   const std::optional<Eigen::VectorXd>& start = std::nullopt);

struct EmOptions {
  double rel_tol = 1e-10;
  double step_tol = 1e-8;
  int max_iter = 20000;
};

/// Posterior mode (or MLE with a flat prior) for fixed lambda, cobit link only.
/// Throws DomainError for boundary responses with lambda >= 2.
FitResult em_map(const RegressionModel& m, int lambda, const EmOptions& opt = {},
                 const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// First E-step weights lambda E[KG(1, eta_i)].
Eigen::VectorXd em_weights(const Eigen::VectorXd& eta, int lambda);

struct ProfileResult {
  int lambda = 1;
  /// Profile objective for l = 1..Lmax, index l - 1.
  std::vector<double> objective;
};

/// argmax over l in 1..Lmax of sum_i log p_cobin(y_i | theta_i(beta_hat), l).
/// With boundary responses only l = 1 is admissible.
ProfileResult profile_lambda(const RegressionModel& m, const Eigen::VectorXd& beta_hat,
                             int Lmax = 70);

/// Profile with beta refit per l: IRLS once under a flat prior, EM per l otherwise.
/// The objective adds log p(beta_hat(l)) when a prior is set.
struct ProfiledFit {
  FitResult fit;
  ProfileResult profile;
};
ProfiledFit fit_with_profile(const RegressionModel& m, int Lmax = 70);

}  // namespace cobin::glm
