#include "cobin/gibbs.hpp"

#include <cmath>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/linalg.hpp"
#include "cobin/numeric.hpp"

namespace cobin::gibbs {

namespace {

void check_data(const glm::RegressionModel& m) {
  if (m.link != glm::Link::cobit) throw DomainError("gibbs: the sampler requires the cobit link");
  if (m.X.rows() != m.y.size()) throw DomainError("gibbs: X and y have different numbers of rows");
  if (!m.X.allFinite()) throw DomainError("gibbs: X has non-finite entries");
  for (Eigen::Index i = 0; i < m.y.size(); ++i) {
    if (!(m.y[i] >= 0.0 && m.y[i] <= 1.0)) throw DomainError("gibbs: response outside [0, 1]");
  }
}

Eigen::VectorXd sample_kappa(const Eigen::VectorXi& lambda, const Eigen::VectorXd& eta,
                             const SamplerOptions& opt, Rng& rng) {
  Eigen::VectorXd kappa(eta.size());
  const std::uint64_t seed = rng.engine()();
  kernels::kg_batch({lambda.data(), static_cast<std::size_t>(lambda.size())},
                    {eta.data(), static_cast<std::size_t>(eta.size())},
                    {kappa.data(), static_cast<std::size_t>(kappa.size())}, seed, opt.kg, opt.exec);
  return kappa;
}

}  // namespace

Family parse_family(const std::string& s) {
  if (s == "cobin") return Family::cobin;
  if (s == "micobin") return Family::micobin;
  throw ConfigError("unknown family '" + s + "' (expected cobin or micobin)");
}

std::string family_name(Family f) { return f == Family::cobin ? "cobin" : "micobin"; }

PriorSpec PriorSpec::defaults(Eigen::Index p, double beta_var, int L) {
  PriorSpec s;
  s.sigma_beta = Eigen::MatrixXd::Identity(p, p) * beta_var;
  s.L = L;
  s.lambda_log_prior = dist::default_lambda_log_prior(L);
  return s;
}

void PriorSpec::validate(Eigen::Index p) const {
  if (sigma_beta.rows() != p || sigma_beta.cols() != p) {
    throw ConfigError("prior: sigma_beta must be " + std::to_string(p) + " x " + std::to_string(p));
  }
  if (!sigma_beta.isApprox(sigma_beta.transpose())) throw ConfigError("prior: sigma_beta not symmetric");
  if (L < 1) throw ConfigError("prior: L must be >= 1");
  if (static_cast<int>(lambda_log_prior.size()) != L) {
    throw ConfigError("prior: lambda prior must have L entries");
  }
  if (!(a_psi > 0.0 && b_psi > 0.0)) throw ConfigError("prior: psi beta parameters must be positive");
  if (!(sigma_u_scale > 0.0)) throw ConfigError("prior: half-Cauchy scale must be positive");
}

void SamplerOptions::validate() const {
  if (iters < 1) throw ConfigError("sampler: iters must be >= 1");
  if (burnin < 0 || burnin >= iters) throw ConfigError("sampler: need 0 <= burnin < iters");
  kg.validate();
}

Eigen::VectorXd micobin_log_weights(double psi, int L) {
  Eigen::VectorXd w(L);
  for (int l = 1; l <= L; ++l) w[l - 1] = dist::micobin_log_weight(l, psi);
  return w;
}

void micobin_lambda_logits(double y, double eta, const Eigen::VectorXd& log_weights,
                           const Eigen::Ref<const Eigen::RowVectorXd>& log_h, Eigen::VectorXd& out) {
  const double lin = y * eta - dist::log_partition(eta);
  const Eigen::Index L = log_h.size();
  out.resize(L);
  for (Eigen::Index l = 1; l <= L; ++l) out[l - 1] = log_weights[l - 1] + log_h[l - 1] + l * lin;
}

Eigen::VectorXd micobin_lambda_logits(double y, double eta, double psi,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& log_h) {
  Eigen::VectorXd w;
  micobin_lambda_logits(y, eta, micobin_log_weights(psi, static_cast<int>(log_h.size())), log_h, w);
  return w;
}

int sample_log_categorical(const Eigen::VectorXd& logw, Rng& rng) {
  const double m = logw.maxCoeff();
  if (!std::isfinite(m)) throw NumericalError("categorical draw with no finite weight");
  Eigen::VectorXd w = (logw.array() - m).exp();
  const double u = rng.uniform() * w.sum();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    acc += w[k];
    if (u < acc) return static_cast<int>(k);
  }
  // u landed on the rounding slack above the last cumulative sum
  for (Eigen::Index k = w.size() - 1; k >= 0; --k)
    if (w[k] > 0.0) return static_cast<int>(k);
  return 0;
}

Eigen::VectorXd BetaConditional::mean() const {
  return linalg::checked_llt(precision, "beta conditional precision").solve(linear);
}

BetaConditional beta_conditional(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& kappa, const Eigen::VectorXd& lambda,
                                 const Eigen::MatrixXd& prior_precision) {
  BetaConditional c;
  c.precision = X.transpose() * kappa.asDiagonal() * X + prior_precision;
  c.linear = X.transpose() * (lambda.array() * (y.array() - 0.5)).matrix();
  return c;
}

std::pair<double, double> psi_posterior(const Eigen::VectorXi& lambda, double a, double b) {
  const double n = static_cast<double>(lambda.size());
  return {a + 2.0 * n, b - n + static_cast<double>(lambda.sum())};
}

PosteriorDraws gibbs_cobin(const glm::RegressionModel& m, const PriorSpec& prior,
                           const SamplerOptions& opt) {
  check_data(m);
  prior.validate(m.X.cols());
  opt.validate();
  const auto n = m.X.rows();
  const auto p = m.X.cols();
  const int L = prior.L;
  Rng rng(opt.seed, static_cast<std::uint64_t>(opt.chain));
  const Eigen::MatrixXd prec = linalg::spd_inverse(prior.sigma_beta, "prior covariance");
  const Eigen::VectorXd hsum = kernels::log_h_sums(m.y, L, opt.exec);
  PosteriorDraws out;
  out.family = Family::cobin;
  out.seed = opt.seed;
  out.chain = opt.chain;
  out.burnin = opt.burnin;
  out.iters = opt.iters;
  const int kept = opt.iters - opt.burnin;
  out.beta.resize(kept, p);
  out.dispersion.resize(kept);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXi lambda_vec(n);
  for (int it = 0; it < opt.iters; ++it) {
    const Eigen::VectorXd eta = m.X * beta;
    double lin = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) lin += m.y[i] * eta[i] - dist::log_partition(eta[i]);
    Eigen::VectorXd logits(L);
    for (int l = 1; l <= L; ++l) logits[l - 1] = prior.lambda_log_prior[l - 1] + hsum[l - 1] + l * lin;
    const int lambda = 1 + sample_log_categorical(logits, rng);
    lambda_vec.setConstant(lambda);
    const Eigen::VectorXd kappa = sample_kappa(lambda_vec, eta, opt, rng);
    const BetaConditional bc =
        beta_conditional(m.X, m.y, kappa, lambda_vec.cast<double>(), prec);
    const auto llt = linalg::checked_llt(bc.precision, "beta conditional precision");
    beta = linalg::sample_canonical(llt, bc.linear, rng);
    if (it >= opt.burnin) {
      out.beta.row(it - opt.burnin) = beta.transpose();
      out.dispersion[it - opt.burnin] = lambda;
    }
  }
  return out;
}

PosteriorDraws gibbs_micobin(const glm::RegressionModel& m, const PriorSpec& prior,
                             const SamplerOptions& opt) {
  check_data(m);
  prior.validate(m.X.cols());
  opt.validate();
  const auto n = m.X.rows();
  const auto p = m.X.cols();
  const int L = prior.L;
  Rng rng(opt.seed, static_cast<std::uint64_t>(opt.chain));
  const Eigen::MatrixXd prec = linalg::spd_inverse(prior.sigma_beta, "prior covariance");
  const Eigen::MatrixXd log_h = kernels::log_h_table(m.y, L, opt.exec);
  PosteriorDraws out;
  out.family = Family::micobin;
  out.seed = opt.seed;
  out.chain = opt.chain;
  out.burnin = opt.burnin;
  out.iters = opt.iters;
  const int kept = opt.iters - opt.burnin;
  out.beta.resize(kept, p);
  out.dispersion.resize(kept);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double psi = 0.5;
  Eigen::VectorXi lambda(n);
  Eigen::VectorXd logits(L);
  for (int it = 0; it < opt.iters; ++it) {
    const Eigen::VectorXd eta = m.X * beta;
    const Eigen::VectorXd lw = micobin_log_weights(psi, L);
    for (Eigen::Index i = 0; i < n; ++i) {
      micobin_lambda_logits(m.y[i], eta[i], lw, log_h.row(i), logits);
      lambda[i] = 1 + sample_log_categorical(logits, rng);
    }
    const Eigen::VectorXd kappa = sample_kappa(lambda, eta, opt, rng);
    const BetaConditional bc = beta_conditional(m.X, m.y, kappa, lambda.cast<double>(), prec);
    const auto llt = linalg::checked_llt(bc.precision, "beta conditional precision");
    beta = linalg::sample_canonical(llt, bc.linear, rng);
    const auto [a, b] = psi_posterior(lambda, prior.a_psi, prior.b_psi);
    psi = rng.beta(a, b);
    if (it >= opt.burnin) {
      out.beta.row(it - opt.burnin) = beta.transpose();
      out.dispersion[it - opt.burnin] = psi;
    }
  }
  return out;
}

}  // namespace cobin::gibbs
