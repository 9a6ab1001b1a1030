#pragma once

// Synthetic data for robustness studies: responses with a prescribed mean
// drawn from beta, cobin, beta-rectangular or a three-component beta mixture,
// optionally with a Gaussian-process spatial effect in the linear predictor.

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "cobin/glm.hpp"
#include "cobin/rng.hpp"

namespace cobin::eval {

enum class Dgp { beta, cobin, beta_rectangular, beta_mixture };

Dgp parse_dgp(const std::string& s);
std::string dgp_name(Dgp d);

/// Nuisance parameters; only the ones relevant to the family are used.
struct DgpParams {
  double phi = 8.0;    // beta precision (sum of shapes)
  int lambda = 3;      // cobin dispersion
  double alpha = 0.2;  // beta-rectangular uniform weight scale, in (0, 1)

  /// phi = 8 (beta), lambda = 3 (cobin), (alpha, phi) = (0.2, 10)
  /// (beta-rectangular), phi = 40 (beta mixture).
  static DgpParams defaults(Dgp d);
  void validate(Dgp d) const;
};

/// Beta-rectangular weight on the beta component, 1 - alpha (1 - |2 mu - 1|).
double rectangular_weight(double mu, double alpha);
/// Offset of the outer beta-mixture components, min(mu, 1 - mu) / 2.
double mixture_offset(double mu);

/// Density of the family with mean mu at y in (0, 1).
double dgp_density(Dgp d, double y, double mu, const DgpParams& p);
/// One response with mean mu.
double dgp_sample(Dgp d, double mu, const DgpParams& p, Rng& rng);

struct SpatialEffect {
  double sigma2 = 1.0;
  double rho = 0.1;
};

struct DataGeneratorSpec {
  Dgp family = Dgp::cobin;
  glm::Link link = glm::Link::cobit;
  Eigen::VectorXd beta_true = Eigen::Vector2d(0.0, 1.0);
  /// Covariates are an intercept plus iid N(0, x_sd^2) columns.
  double x_sd = 3.0;
  int n = 100;
  DgpParams params = DgpParams::defaults(Dgp::cobin);
  /// Sites uniform on the unit square, u ~ GP(0, sigma2 exp(-d / rho)).
  std::optional<SpatialEffect> spatial;

  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd mu;
  /// Empty without a spatial effect.
  Eigen::MatrixXd coords;
  Eigen::VectorXd u;

  /// Rows [first, first + count).
  Dataset slice(Eigen::Index first, Eigen::Index count) const;
};

Dataset generate(const DataGeneratorSpec& spec, Rng& rng);

}  // namespace cobin::eval
