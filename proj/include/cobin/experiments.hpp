#pragma once

// Replicated simulation studies: maximum-likelihood robustness across response
// distributions (table 1) and spatial cobin/micobin regression (table 2).
// Every replicate draws from its own stream derived from the master seed, so
// results do not depend on thread count or scheduling.

#include <cstdint>
#include <string>
#include <vector>

#include "cobin/generators.hpp"
#include "cobin/gibbs.hpp"
#include "cobin/kernels.hpp"

namespace cobin::eval {

/// Mean and Monte Carlo standard error over replicates.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// Bias and RMSE of estimates of `truth`, with delta-method SE for the RMSE.
std::pair<Estimate, Estimate> bias_rmse(const std::vector<double>& estimates, double truth);
Estimate mean_se(const std::vector<double>& x);

/// Stream seed for cell `cell` of an experiment with master seed `seed`.
std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t cell);

struct Table1Config {
  int replicates = 200;
  std::vector<int> ns{100, 400, 1600};
  std::vector<glm::Link> links{glm::Link::cobit, glm::Link::logit};
  std::vector<Dgp> dgps{Dgp::beta, Dgp::cobin, Dgp::beta_rectangular, Dgp::beta_mixture};
  std::uint64_t seed = 1;
  kernels::Exec exec = kernels::Exec::serial;

  void validate() const;
};

/// Covariate sd: 3 under cobit, 1 under logit.
double table1_x_sd(glm::Link link);

struct Table1Cell {
  glm::Link link = glm::Link::cobit;
  Dgp dgp = Dgp::cobin;
  int n = 0;
  Estimate bias;
  Estimate rmse;
  int ok = 0;
  int failed = 0;
  /// beta_1 estimates of the successful replicates, in replicate order.
  std::vector<double> estimates;
};

/// Cobin IRLS estimate of beta_1 (truth 1) per replicate, cells ordered by
/// link, then dgp, then n.
std::vector<Table1Cell> run_table1(const Table1Config& cfg);

struct Table2Config {
  int replicates = 50;
  int n_train = 200;
  int n_test = 50;
  double rho = 0.1;
  double sigma2 = 1.0;
  double x_sd = 3.0;
  Dgp dgp = Dgp::beta_rectangular;
  DgpParams params = DgpParams::defaults(Dgp::beta_rectangular);
  std::vector<gibbs::Family> families{gibbs::Family::cobin, gibbs::Family::micobin};
  int iters = 6000;
  int burnin = 1000;
  double beta_var = 1e4;
  kg::EnvelopeConfig kg;
  std::uint64_t seed = 1;
  kernels::Exec exec = kernels::Exec::serial;

  void validate() const;
};

struct Table2Replicate {
  bool ok = false;
  std::string error;
  double beta1 = 0.0;  // posterior mean
  double neg_test_ll = 0.0;
  double mspe = 0.0;
  double mess = 0.0;
  double mh_acceptance = 0.0;
  double minutes = 0.0;  // wall clock, not reproducible
};

struct Table2Row {
  gibbs::Family family = gibbs::Family::cobin;
  Estimate bias;
  Estimate rmse;
  Estimate neg_test_ll;
  Estimate mspe;
  Estimate mess;
  Estimate minutes;
  int ok = 0;
  int failed = 0;
  std::vector<Table2Replicate> replicates;
};

/// Spatial regression with fixed range on beta-rectangular data; each replicate
/// fits every family on the same training set and scores the held-out set.
std::vector<Table2Row> run_table2(const Table2Config& cfg);

/// Single spatial replicate; exposed for tests and the CLI.
Table2Replicate table2_replicate(const Table2Config& cfg, int r, gibbs::Family family);

}  // namespace cobin::eval
