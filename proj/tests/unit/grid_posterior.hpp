#pragma once

// Brute-force posterior of a one-predictor cobin model on a dense grid, used
// to check sampler output.

#include <vector>

#include <Eigen/Dense>

namespace testutil {

struct GridPosterior {
  std::vector<double> beta;     // grid nodes
  std::vector<double> density;  // normalized marginal density of beta
  double mean = 0.0;
  double sd = 0.0;
};

/// eta_i = beta x_i, beta ~ N(0, prior_var), lambda ~ default prior on 1..L,
/// lambda summed out exactly.
GridPosterior cobin_grid_posterior(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                   double prior_var, int L = 70, int nodes = 20001);

/// Total variation between the histogram of draws and the grid posterior on
/// equal-width bins over the central 0.999 of the grid mass, plus two tail bins.
double histogram_tv(const GridPosterior& g, const std::vector<double>& draws, int bins = 40);

/// Standard error of a chain mean by batch means with batch size floor(sqrt(M)).
double batch_means_se(const std::vector<double>& chain);

}  // namespace testutil
