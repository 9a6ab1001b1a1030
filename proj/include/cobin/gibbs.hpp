#pragma once

// Blocked Gibbs samplers for cobin and micobin regression under the cobit link,
// built on the Kolmogorov-Gamma augmentation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cobin/glm.hpp"
#include "cobin/kernels.hpp"
#include "cobin/kg.hpp"

namespace cobin::gibbs {

enum class Family { cobin, micobin };

Family parse_family(const std::string& s);
std::string family_name(Family f);

struct PriorSpec {
  /// beta ~ N(0, sigma_beta).
  Eigen::MatrixXd sigma_beta;
  /// log p(l), l = 1..L (cobin only).
  std::vector<double> lambda_log_prior;
  double a_psi = 2.0;
  double b_psi = 2.0;
  int L = 70;
  /// Half-Cauchy scale for the random-effect standard deviation.
  double sigma_u_scale = 1.0;

  /// beta variance beta_var * I, default lambda prior, Beta(2, 2) on psi.
  static PriorSpec defaults(Eigen::Index p, double beta_var = 1e4, int L = 70);
  void validate(Eigen::Index p) const;
};

struct SamplerOptions {
  /// Total iterations including burn-in.
  int iters = 6000;
  int burnin = 1000;
  std::uint64_t seed = 1;
  int chain = 0;
  kg::EnvelopeConfig kg;
  kernels::Exec exec = kernels::Exec::serial;

  void validate() const;
};

/// Kept draws (iterations after burn-in), one row per draw.
struct PosteriorDraws {
  Family family = Family::cobin;
  Eigen::MatrixXd beta;
  /// lambda (cobin) or psi (micobin).
  Eigen::VectorXd dispersion;
  /// Random effects, empty for fixed-effects models.
  Eigen::MatrixXd u;
  /// Covariance parameters, columns named in vartheta_names.
  Eigen::MatrixXd vartheta;
  std::vector<std::string> vartheta_names;
  double mh_acceptance = 0.0;
  std::uint64_t seed = 0;
  int chain = 0;
  int burnin = 0;
  int iters = 0;

  Eigen::Index size() const { return beta.rows(); }
};

/// Per-observation lambda categorical weights for micobin, log scale:
/// log w_l(psi) + log h(y_i, l) + l (y_i eta_i - B(eta_i)).
Eigen::VectorXd micobin_lambda_logits(double y, double eta, double psi,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& log_h);

/// log w_l(psi) for l = 1..L.
Eigen::VectorXd micobin_log_weights(double psi, int L);

/// Same logits with the mixture weights precomputed, written into out.
void micobin_lambda_logits(double y, double eta, const Eigen::VectorXd& log_weights,
                           const Eigen::Ref<const Eigen::RowVectorXd>& log_h, Eigen::VectorXd& out);

/// Index drawn from unnormalized log weights (max-subtracted).
int sample_log_categorical(const Eigen::VectorXd& logw, Rng& rng);

/// Conditional of beta given kappa and lambda: precision X^T K X + Sigma^{-1},
/// linear term X^T lambda (y - 1/2).
struct BetaConditional {
  Eigen::MatrixXd precision;
  Eigen::VectorXd linear;
  Eigen::VectorXd mean() const;
};
BetaConditional beta_conditional(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& kappa, const Eigen::VectorXd& lambda,
                                 const Eigen::MatrixXd& prior_precision);

/// Beta(a + 2n, b - n + sum lambda_i) parameters of the psi update.
std::pair<double, double> psi_posterior(const Eigen::VectorXi& lambda, double a, double b);

/// Cobin regression. Boundary responses pin lambda to 1.
PosteriorDraws gibbs_cobin(const glm::RegressionModel& m, const PriorSpec& prior,
                           const SamplerOptions& opt);

/// Micobin regression; responses may sit on {0, 1}.
PosteriorDraws gibbs_micobin(const glm::RegressionModel& m, const PriorSpec& prior,
                             const SamplerOptions& opt);

}  // namespace cobin::gibbs
