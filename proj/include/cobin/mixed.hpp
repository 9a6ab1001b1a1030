#pragma once

// Partially collapsed Gibbs sampler for latent Gaussian mixed models
//   eta = X beta + Z u,  u ~ N(0, sigma2 R(rho)),
// with cobin or micobin responses, and prediction at new spatial locations.
//
// Both covariance backends work in the q-dimensional space of u through
// A = Sigma^{-1} + Z^T K Z, so no n x n matrix is ever formed:
//   dense_kernel      R(rho) = exp(-d / rho), Sigma^{-1} held as a dense matrix
//   sparse_precision  Sigma^{-1} = Q1(rho) / sigma2 with Q1 sparse

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cobin/gibbs.hpp"
#include "cobin/linalg.hpp"

namespace cobin::mixed {

enum class CovModel { dense_kernel, sparse_precision };

/// Builds the unit-variance precision Q1(rho) for the sparse backend.
using PrecisionBuilder = std::function<linalg::SpMat(double rho)>;

struct MixedModelSpec {
  /// n x q random-effect design.
  linalg::SpMat Z;
  CovModel cov = CovModel::dense_kernel;
  /// q x d locations of the random effects; required by dense_kernel and prediction.
  Eigen::MatrixXd coords;
  /// Required by sparse_precision.
  PrecisionBuilder precision;
  double sigma2_init = 1.0;
  bool sigma2_fixed = false;
  double rho = 0.1;
  bool rho_free = false;
  /// Upper end of the uniform prior on rho when it is free; 0 means the
  /// largest distance between coordinates.
  double rho_max = 0.0;
  /// Initial random-walk sd on the log scale; adapted during burn-in.
  double mh_scale = 0.5;
  double mh_target = 0.4;
  /// Keep the input ordering in the sparse Cholesky. Slower, but the factor
  /// then matches the dense one so both backends give the same chain.
  bool natural_ordering = false;

  /// Identity Z, exponential kernel on the given coordinates.
  static MixedModelSpec spatial(const Eigen::MatrixXd& coords, double rho, CovModel cov);
  /// Indicator Z for groups[i] in 0..q-1, iid effects (sparse identity precision).
  static MixedModelSpec random_intercept(const std::vector<int>& groups, int q);

  void validate(Eigen::Index n) const;
  Eigen::Index q() const { return Z.cols(); }
};

/// Q1(rho) = R(rho)^{-1} computed densely and stored sparse. Exact, O(q^3);
/// for tests and small problems.
PrecisionBuilder exact_kernel_precision(const Eigen::MatrixXd& coords);

/// Moments of the collapsed beta conditional and the collapsed log-likelihood
/// of (sigma2, rho), both computed through A. Exposed for testing.
struct CollapsedTerms {
  Eigen::MatrixXd beta_precision;  // X^T C^{-1} X + Sigma_beta^{-1}
  Eigen::VectorXd beta_linear;     // X^T C^{-1} ytilde
  double loglik = 0.0;             // log N(ytilde; X beta, C) up to a theta-free constant
};

/// C = K^{-1} + Z Sigma_u Z^T, ytilde = lambda (y - 1/2) / kappa.
CollapsedTerms collapsed_terms(const glm::RegressionModel& m, const MixedModelSpec& spec,
                               const Eigen::VectorXd& kappa, const Eigen::VectorXd& lambda,
                               const Eigen::VectorXd& beta, double sigma2, double rho,
                               const Eigen::MatrixXd& prior_precision);

gibbs::PosteriorDraws gibbs_mixed(const glm::RegressionModel& m, const gibbs::PriorSpec& prior,
                                  const MixedModelSpec& spec, gibbs::Family family,
                                  const gibbs::SamplerOptions& opt);

struct Prediction {
  /// Posterior mean and sd of the conditional mean B'(eta*) per location.
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  /// M x n_new linear predictor draws.
  Eigen::MatrixXd eta;
  /// M x n_new random-effect draws.
  Eigen::MatrixXd u;
};

/// eta(s*) = x(s*)^T beta + u(s*), u(s*) | u from the kriging conditional,
/// one draw per posterior draw.
Prediction predict_at(const gibbs::PosteriorDraws& draws, const MixedModelSpec& spec,
                      const Eigen::MatrixXd& X_new, const Eigen::MatrixXd& coords_new, Rng& rng);

}  // namespace cobin::mixed
