#include "cobin/metrics.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"

namespace cobin::eval {

namespace {

double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().mean());
}

}  // namespace

Eigen::VectorXd quantile_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                                   gibbs::Family family, double dispersion) {
  if (y.size() != theta.size()) throw DomainError("quantile residuals: size mismatch");
  const boost::math::normal_distribution<double> N01;
  const double lo = 1e-300, hi = 1.0 - std::ldexp(1.0, -53);
  Eigen::VectorXd r(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double F;
    if (family == gibbs::Family::cobin) {
      const double l = std::round(dispersion);
      if (l < 1.0 || l != dispersion) throw DomainError("quantile residuals: lambda must be a positive integer");
      F = dist::cobin_cdf(y[i], {theta[i], static_cast<int>(l)});
    } else {
      F = dist::micobin_cdf(y[i], {theta[i], dispersion});
    }
    r[i] = boost::math::quantile(N01, std::clamp(F, lo, hi));
  }
  return r;
}

Eigen::MatrixXd pointwise_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& eta,
                                      const Eigen::VectorXd& dispersion, gibbs::Family family) {
  const auto M = eta.rows();
  const auto n = eta.cols();
  if (y.size() != n || dispersion.size() != M) throw DomainError("pointwise log density: size mismatch");
  const int L = dist::kDefaultTrunc;
  Eigen::MatrixXd log_h(n, L);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double> row = dist::irwin_hall_log_table(y[i], L);
    for (int l = 0; l < L; ++l) log_h(i, l) = row[l];
  }
  Eigen::MatrixXd out(M, n);
  Eigen::VectorXd logits(L);
  for (Eigen::Index m = 0; m < M; ++m) {
    if (family == gibbs::Family::cobin) {
      const int lam = static_cast<int>(dispersion[m]);
      if (lam < 1 || lam > L) throw DomainError("pointwise log density: lambda outside 1..L");
      for (Eigen::Index i = 0; i < n; ++i) {
        const double th = eta(m, i);
        out(m, i) = dist::cobin_log_density_cached(y[i], log_h(i, lam - 1), th, lam, dist::log_partition(th));
      }
    } else {
      const Eigen::VectorXd lw = gibbs::micobin_log_weights(dispersion[m], L);
      for (Eigen::Index i = 0; i < n; ++i) {
        gibbs::micobin_lambda_logits(y[i], eta(m, i), lw, log_h.row(i), logits);
        const double mx = logits.maxCoeff();
        out(m, i) = mx + std::log((logits.array() - mx).exp().sum());
      }
    }
  }
  return out;
}

double neg_test_loglik(const Eigen::MatrixXd& log_density) {
  if (log_density.size() == 0) throw DomainError("negtestLL: no draws or no test points");
  double s = 0.0;
  for (Eigen::Index i = 0; i < log_density.cols(); ++i) s += log_mean_exp(log_density.col(i));
  return -s / static_cast<double>(log_density.cols());
}

double mspe(const Eigen::VectorXd& mu_true, const Eigen::VectorXd& mu_hat) {
  if (mu_true.size() != mu_hat.size() || mu_true.size() == 0) throw DomainError("MSPE: size mismatch");
  return (mu_true - mu_hat).squaredNorm() / static_cast<double>(mu_true.size());
}

double multivariate_ess(const Eigen::MatrixXd& draws) {
  const auto M = draws.rows();
  const auto p = draws.cols();
  if (M < 10) throw DomainError("mESS: need at least 10 draws");
  const auto b = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(M))));
  const Eigen::Index a = M / b;
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::MatrixXd lambda = centered.transpose() * centered / static_cast<double>(M - 1);
  // batches cover the first a * b draws, centered at their own overall mean
  const Eigen::RowVectorXd used_mean = draws.topRows(a * b).colwise().mean();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < a; ++k) {
    const Eigen::RowVectorXd d = draws.middleRows(k * b, b).colwise().mean() - used_mean;
    sigma += d.transpose() * d;
  }
  sigma *= static_cast<double>(b) / static_cast<double>(a - 1);
  const double ld_lambda = Eigen::LLT<Eigen::MatrixXd>(lambda).matrixLLT().diagonal().array().log().sum() * 2.0;
  Eigen::LLT<Eigen::MatrixXd> ls(sigma);
  if (ls.info() != Eigen::Success) throw NumericalError("mESS: batch-means covariance is singular");
  const double ld_sigma = ls.matrixLLT().diagonal().array().log().sum() * 2.0;
  return static_cast<double>(M) * std::exp((ld_lambda - ld_sigma) / static_cast<double>(p));
}

Waic waic(const Eigen::MatrixXd& log_density) {
  const auto M = log_density.rows();
  if (M < 2) throw DomainError("WAIC: need at least two draws");
  Waic w;
  for (Eigen::Index i = 0; i < log_density.cols(); ++i) {
    const auto col = log_density.col(i);
    w.lppd += log_mean_exp(col);
    const double mu = col.mean();
    w.p_waic += (col.array() - mu).square().sum() / static_cast<double>(M - 1);
  }
  w.waic = -2.0 * (w.lppd - w.p_waic);
  return w;
}

Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.empty()) throw DomainError("R-hat: no chains");
  const auto p = chains[0].cols();
  Eigen::Index len = chains[0].rows();
  for (const auto& c : chains) {
    if (c.cols() != p) throw DomainError("R-hat: chains differ in width");
    len = std::min(len, c.rows());
  }
  const Eigen::Index half = len / 2;
  if (half < 2) throw DomainError("R-hat: chains too short");
  std::vector<Eigen::MatrixXd> parts;
  for (const auto& c : chains) {
    parts.push_back(c.topRows(half));
    parts.push_back(c.middleRows(len - half, half));
  }
  const double n = static_cast<double>(half);
  const double m = static_cast<double>(parts.size());
  Eigen::VectorXd out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd means(parts.size()), vars(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto col = parts[k].col(j);
      means[k] = col.mean();
      vars[k] = (col.array() - means[k]).square().sum() / (n - 1.0);
    }
    const double W = vars.mean();
    const double B = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
    const double var_plus = (n - 1.0) / n * W + B / n;
    out[j] = std::sqrt(var_plus / W);
  }
  return out;
}

}  // namespace cobin::eval
