#include "cobin/mixed.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"

namespace cobin::mixed {

using linalg::SpMat;

MixedModelSpec MixedModelSpec::spatial(const Eigen::MatrixXd& coords, double rho, CovModel cov) {
  MixedModelSpec s;
  const auto q = coords.rows();
  s.Z.resize(q, q);
  s.Z.setIdentity();
  s.coords = coords;
  s.rho = rho;
  s.cov = cov;
  if (cov == CovModel::sparse_precision) s.precision = exact_kernel_precision(coords);
  return s;
}

MixedModelSpec MixedModelSpec::random_intercept(const std::vector<int>& groups, int q) {
  if (q < 1) throw ConfigError("random intercept: need at least one group");
  MixedModelSpec s;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= q) throw ConfigError("random intercept: group index out of range");
    t.emplace_back(static_cast<int>(i), groups[i], 1.0);
  }
  s.Z.resize(static_cast<Eigen::Index>(groups.size()), q);
  s.Z.setFromTriplets(t.begin(), t.end());
  s.cov = CovModel::sparse_precision;
  s.precision = [q](double) {
    SpMat I(q, q);
    I.setIdentity();
    return I;
  };
  return s;
}

void MixedModelSpec::validate(Eigen::Index n) const {
  if (Z.rows() != n) throw ConfigError("mixed: Z must have one row per observation");
  if (Z.cols() < 1) throw ConfigError("mixed: Z has no columns");
  if (cov == CovModel::dense_kernel && coords.rows() != Z.cols()) {
    throw ConfigError("mixed: dense kernel needs one coordinate row per column of Z");
  }
  if (cov == CovModel::sparse_precision && !precision) {
    throw ConfigError("mixed: sparse precision backend needs a precision builder");
  }
  if (!(sigma2_init > 0.0)) throw ConfigError("mixed: initial sigma2 must be positive");
  if (!(rho > 0.0)) throw ConfigError("mixed: rho must be positive");
  if (!(mh_scale > 0.0)) throw ConfigError("mixed: MH proposal scale must be positive");
  if (!(mh_target > 0.0 && mh_target < 1.0)) throw ConfigError("mixed: MH target rate must be in (0, 1)");
  if (rho_free && rho_max <= 0.0 && coords.rows() < 2) {
    throw ConfigError("mixed: free rho needs coordinates or rho_max");
  }
  if (Z.cols() < n) {
    const SpMat ztz = SpMat(Z.transpose()) * Z;
    linalg::SparseChol chk;
    try {
      chk.compute(ztz, "Z^T Z");
    } catch (const NumericalError&) {
      throw ConfigError("mixed: Z does not have full column rank");
    }
  }
}

PrecisionBuilder exact_kernel_precision(const Eigen::MatrixXd& coords) {
  return [coords](double rho) {
    const Eigen::MatrixXd R = linalg::exponential_kernel(coords, coords, rho);
    return linalg::to_sparse(linalg::spd_inverse(R, "kernel matrix"));
  };
}

namespace {

double effective_rho_max(const MixedModelSpec& s) {
  if (s.rho_max > 0.0) return s.rho_max;
  return linalg::distances(s.coords, s.coords).maxCoeff();
}

// Unit-variance precision Q1(rho) and log|Q1| for one value of rho.
struct RhoState {
  double rho = 0.0;
  Eigen::MatrixXd dense;
  SpMat sparse;
  double log_det_q1 = 0.0;
};

RhoState make_rho_state(const MixedModelSpec& s, double rho) {
  RhoState st;
  st.rho = rho;
  if (s.cov == CovModel::dense_kernel) {
    const Eigen::MatrixXd R = linalg::exponential_kernel(s.coords, s.coords, rho);
    const auto llt = linalg::checked_llt(R, "kernel matrix");
    st.log_det_q1 = -linalg::log_det(llt);
    st.dense = llt.solve(Eigen::MatrixXd::Identity(R.rows(), R.cols()));
    st.dense = 0.5 * (st.dense + st.dense.transpose()).eval();
  } else {
    st.sparse = s.precision(rho);
    if (st.sparse.rows() != s.q() || st.sparse.cols() != s.q()) {
      throw ConfigError("mixed: precision builder returned a matrix of the wrong size");
    }
    linalg::SparseChol c(s.natural_ordering);
    c.compute(st.sparse, "random-effect precision");
    st.log_det_q1 = c.log_det();
  }
  return st;
}

// Cholesky factor of A = Q1 / sigma2 + Z^T K Z.
class AFactor {
 public:
  AFactor(const MixedModelSpec& s, const RhoState& st, double sigma2, const SpMat& ztkz)
      : sparse_(s.cov == CovModel::sparse_precision) {
    const double q = static_cast<double>(s.q());
    log_det_sigma_ = q * std::log(sigma2) - st.log_det_q1;
    if (sparse_) {
      sp_ = std::make_shared<linalg::SparseChol>(s.natural_ordering);
      const SpMat A = st.sparse / sigma2 + ztkz;
      sp_->compute(A, "A = Sigma^{-1} + Z^T K Z");
      log_det_a_ = sp_->log_det();
    } else {
      Eigen::MatrixXd A = st.dense / sigma2;
      A += Eigen::MatrixXd(ztkz);
      dense_ = linalg::checked_llt(A, "A = Sigma^{-1} + Z^T K Z");
      log_det_a_ = linalg::log_det(dense_);
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    return sparse_ ? sp_->solve(b) : Eigen::MatrixXd(dense_.solve(b));
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return sparse_ ? sp_->solve(b) : Eigen::VectorXd(dense_.solve(b));
  }
  Eigen::VectorXd sample(const Eigen::VectorXd& b, Rng& rng) const {
    return sparse_ ? sp_->sample(b, rng) : linalg::sample_canonical(dense_, b, rng);
  }
  // -1/2 [log|A| + log|Sigma| - v^T A^{-1} v]
  double collapsed_loglik(const Eigen::VectorXd& v) const {
    return -0.5 * (log_det_a_ + log_det_sigma_ - v.dot(solve(v)));
  }

 private:
  bool sparse_;
  Eigen::LLT<Eigen::MatrixXd> dense_;
  std::shared_ptr<linalg::SparseChol> sp_;
  double log_det_a_ = 0.0;
  double log_det_sigma_ = 0.0;
};

SpMat weighted_gram(const SpMat& Zt, const Eigen::VectorXd& kappa) {
  const SpMat ztk = Zt * kappa.asDiagonal();
  SpMat g = ztk * SpMat(Zt.transpose());
  g.makeCompressed();
  return g;
}

// Half-Cauchy(scale) on sigma_u, as a density on log sigma2.
double log_prior_log_sigma2(double log_sigma2, double scale) {
  const double s2 = std::exp(log_sigma2);
  return -std::log1p(s2 / (scale * scale)) + 0.5 * log_sigma2;
}

// Uniform on (0, rho_max], as a density on log rho.
double log_prior_log_rho(double log_rho, double rho_max) {
  return std::exp(log_rho) <= rho_max ? log_rho : -std::numeric_limits<double>::infinity();
}

}  // namespace

CollapsedTerms collapsed_terms(const glm::RegressionModel& m, const MixedModelSpec& spec,
                               const Eigen::VectorXd& kappa, const Eigen::VectorXd& lambda,
                               const Eigen::VectorXd& beta, double sigma2, double rho,
                               const Eigen::MatrixXd& prior_precision) {
  const SpMat Zt = spec.Z.transpose();
  const RhoState st = make_rho_state(spec, rho);
  const AFactor F(spec, st, sigma2, weighted_gram(Zt, kappa));
  const Eigen::VectorXd lr = lambda.array() * (m.y.array() - 0.5);
  const Eigen::MatrixXd W = (Zt * kappa.asDiagonal()) * m.X;
  const Eigen::VectorXd g = Zt * lr;
  CollapsedTerms out;
  out.beta_precision = m.X.transpose() * kappa.asDiagonal() * m.X - W.transpose() * F.solve(W) +
                       prior_precision;
  out.beta_linear = m.X.transpose() * lr - W.transpose() * F.solve(g);
  const Eigen::VectorXd kr = lr - (kappa.array() * (m.X * beta).array()).matrix();
  out.loglik = F.collapsed_loglik(Zt * kr);
  return out;
}

gibbs::PosteriorDraws gibbs_mixed(const glm::RegressionModel& m, const gibbs::PriorSpec& prior,
                                  const MixedModelSpec& spec, gibbs::Family family,
                                  const gibbs::SamplerOptions& opt) {
  if (m.link != glm::Link::cobit) throw DomainError("gibbs: the sampler requires the cobit link");
  if (m.X.rows() != m.y.size()) throw DomainError("gibbs: X and y have different numbers of rows");
  for (Eigen::Index i = 0; i < m.y.size(); ++i) {
    if (!(m.y[i] >= 0.0 && m.y[i] <= 1.0)) throw DomainError("gibbs: response outside [0, 1]");
  }
  prior.validate(m.X.cols());
  opt.validate();
  spec.validate(m.X.rows());

  const auto n = m.X.rows();
  const auto p = m.X.cols();
  const auto q = spec.q();
  const int L = prior.L;
  const bool micobin = family == gibbs::Family::micobin;
  const bool do_mh = !spec.sigma2_fixed || spec.rho_free;
  const double rho_max = spec.rho_free ? effective_rho_max(spec) : 0.0;
  if (spec.rho_free && spec.rho > rho_max) throw ConfigError("mixed: initial rho above rho_max");

  Rng rng(opt.seed, static_cast<std::uint64_t>(opt.chain));
  const Eigen::MatrixXd prec = linalg::spd_inverse(prior.sigma_beta, "prior covariance");
  const Eigen::MatrixXd log_h = kernels::log_h_table(m.y, L, opt.exec);
  Eigen::VectorXd hsum = Eigen::VectorXd::Zero(L);
  for (Eigen::Index i = 0; i < n; ++i) hsum += log_h.row(i).transpose();
  const SpMat Zt = spec.Z.transpose();

  gibbs::PosteriorDraws out;
  out.family = family;
  out.seed = opt.seed;
  out.chain = opt.chain;
  out.burnin = opt.burnin;
  out.iters = opt.iters;
  const int kept = opt.iters - opt.burnin;
  out.beta.resize(kept, p);
  out.dispersion.resize(kept);
  out.u.resize(kept, q);
  out.vartheta.resize(kept, 2);
  out.vartheta_names = {"sigma2", "rho"};

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(q);
  Eigen::VectorXi lambda = Eigen::VectorXi::Ones(n);
  double psi = 0.5;
  double sigma2 = spec.sigma2_init;
  RhoState cur = make_rho_state(spec, spec.rho);
  double log_scale = std::log(spec.mh_scale);
  long accepted = 0;

  for (int it = 0; it < opt.iters; ++it) {
    const Eigen::VectorXd eta = m.X * beta + spec.Z * u;

    // lambda given the full linear predictor
    if (micobin) {
      const Eigen::VectorXd lw = gibbs::micobin_log_weights(psi, L);
      Eigen::VectorXd logits(L);
      for (Eigen::Index i = 0; i < n; ++i) {
        gibbs::micobin_lambda_logits(m.y[i], eta[i], lw, log_h.row(i), logits);
        lambda[i] = 1 + gibbs::sample_log_categorical(logits, rng);
      }
      const auto [a, b] = gibbs::psi_posterior(lambda, prior.a_psi, prior.b_psi);
      psi = rng.beta(a, b);
    } else {
      double lin = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) lin += m.y[i] * eta[i] - dist::log_partition(eta[i]);
      Eigen::VectorXd logits(L);
      for (int l = 1; l <= L; ++l) logits[l - 1] = prior.lambda_log_prior[l - 1] + hsum[l - 1] + l * lin;
      lambda.setConstant(1 + gibbs::sample_log_categorical(logits, rng));
    }

    Eigen::VectorXd kappa(n);
    const std::uint64_t kseed = rng.engine()();
    kernels::kg_batch({lambda.data(), static_cast<std::size_t>(n)},
                      {eta.data(), static_cast<std::size_t>(n)},
                      {kappa.data(), static_cast<std::size_t>(n)}, kseed, opt.kg, opt.exec);

    // beta with u integrated out
    const SpMat ztkz = weighted_gram(Zt, kappa);
    const Eigen::VectorXd lr = lambda.cast<double>().array() * (m.y.array() - 0.5);
    const Eigen::MatrixXd W = (Zt * kappa.asDiagonal()) * m.X;
    auto F = std::make_unique<AFactor>(spec, cur, sigma2, ztkz);
    {
      const Eigen::MatrixXd Vinv =
          m.X.transpose() * kappa.asDiagonal() * m.X - W.transpose() * F->solve(W) + prec;
      const Eigen::VectorXd lin = m.X.transpose() * lr - W.transpose() * F->solve(Eigen::VectorXd(Zt * lr));
      const auto llt = linalg::checked_llt(0.5 * (Vinv + Vinv.transpose()),
                                           ("collapsed beta precision at iteration " + std::to_string(it)).c_str());
      beta = linalg::sample_canonical(llt, lin, rng);
    }
    const Eigen::VectorXd kr = lr - (kappa.array() * (m.X * beta).array()).matrix();
    const Eigen::VectorXd v = Zt * kr;

    // (sigma2, rho) by random-walk MH on the collapsed likelihood
    if (do_mh) {
      const double scale = std::exp(log_scale);
      const double ls_cur = std::log(sigma2);
      const double lr_cur = std::log(cur.rho);
      const double ls_prop = spec.sigma2_fixed ? ls_cur : ls_cur + scale * rng.normal();
      const double lr_prop = spec.rho_free ? lr_cur + scale * rng.normal() : lr_cur;
      const double log_u = std::log(rng.uniform());
      double log_prior_diff = 0.0;
      if (!spec.sigma2_fixed) {
        log_prior_diff += log_prior_log_sigma2(ls_prop, prior.sigma_u_scale) -
                          log_prior_log_sigma2(ls_cur, prior.sigma_u_scale);
      }
      if (spec.rho_free) {
        log_prior_diff += log_prior_log_rho(lr_prop, rho_max) - log_prior_log_rho(lr_cur, rho_max);
      }
      bool accept = false;
      if (std::isfinite(log_prior_diff)) {
        RhoState prop_state = spec.rho_free ? make_rho_state(spec, std::exp(lr_prop)) : RhoState{};
        const RhoState& ps = spec.rho_free ? prop_state : cur;
        auto Fp = std::make_unique<AFactor>(spec, ps, std::exp(ls_prop), ztkz);
        const double log_ratio = Fp->collapsed_loglik(v) - F->collapsed_loglik(v) + log_prior_diff;
        if (log_u < log_ratio) {
          accept = true;
          sigma2 = std::exp(ls_prop);
          if (spec.rho_free) cur = std::move(prop_state);
          F = std::move(Fp);
        }
      }
      if (it < opt.burnin) {
        log_scale += ((accept ? 1.0 : 0.0) - spec.mh_target) / std::pow(it + 1.0, 0.6);
      } else if (accept) {
        ++accepted;
      }
    }

    u = F->sample(v, rng);

    if (it >= opt.burnin) {
      const int k = it - opt.burnin;
      out.beta.row(k) = beta.transpose();
      out.dispersion[k] = micobin ? psi : static_cast<double>(lambda[0]);
      out.u.row(k) = u.transpose();
      out.vartheta(k, 0) = sigma2;
      out.vartheta(k, 1) = cur.rho;
    }
  }
  out.mh_acceptance = do_mh ? static_cast<double>(accepted) / kept : 0.0;
  return out;
}

Prediction predict_at(const gibbs::PosteriorDraws& draws, const MixedModelSpec& spec,
                      const Eigen::MatrixXd& X_new, const Eigen::MatrixXd& coords_new, Rng& rng) {
  const auto M = draws.size();
  const auto n_new = X_new.rows();
  if (draws.u.rows() != M || draws.vartheta.rows() != M || draws.vartheta.cols() < 2) {
    throw DomainError("predict: draws carry no random effects or covariance parameters");
  }
  if (spec.coords.rows() != draws.u.cols()) {
    throw DomainError("predict: spec coordinates do not match the random effects");
  }
  if (coords_new.cols() != spec.coords.cols()) throw DomainError("predict: mismatched coordinate dimension");
  if (coords_new.rows() != n_new) throw DomainError("predict: X_new and coords_new differ in rows");
  if (X_new.cols() != draws.beta.cols()) throw DomainError("predict: X_new has the wrong number of columns");

  Prediction out;
  out.eta.resize(M, n_new);
  out.u.resize(M, n_new);
  double cached_rho = -1.0;
  Eigen::MatrixXd krig;   // R^{-1} R*, q x n_new
  Eigen::MatrixXd noise;  // square root of R** - R*^T R^{-1} R*
  for (Eigen::Index k = 0; k < M; ++k) {
    const double sigma2 = draws.vartheta(k, 0);
    const double rho = draws.vartheta(k, 1);
    if (rho != cached_rho) {
      const Eigen::MatrixXd R = linalg::exponential_kernel(spec.coords, spec.coords, rho);
      const Eigen::MatrixXd Rs = linalg::exponential_kernel(spec.coords, coords_new, rho);
      const Eigen::MatrixXd Rss = linalg::exponential_kernel(coords_new, coords_new, rho);
      krig = linalg::checked_llt(R, "kernel matrix").solve(Rs);
      Eigen::MatrixXd cond = Rss - Rs.transpose() * krig;
      cond = 0.5 * (cond + cond.transpose()).eval();
      // semidefinite when a new site repeats a training site, so LDLT with D clamped at 0
      Eigen::LDLT<Eigen::MatrixXd> ldlt(cond);
      const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
      Eigen::MatrixXd Ld = Eigen::MatrixXd(ldlt.matrixL()) * d.asDiagonal();
      noise = ldlt.transpositionsP().transpose() * Ld;
      cached_rho = rho;
    }
    const Eigen::VectorXd z = linalg::standard_normals(n_new, rng);
    const Eigen::VectorXd us =
        krig.transpose() * draws.u.row(k).transpose() + std::sqrt(sigma2) * (noise * z);
    out.u.row(k) = us.transpose();
    out.eta.row(k) = (X_new * draws.beta.row(k).transpose() + us).transpose();
  }
  Eigen::MatrixXd mu = out.eta.unaryExpr([](double e) { return dist::cobit_inverse(e); });
  out.mean = mu.colwise().mean().transpose();
  out.sd.resize(n_new);
  for (Eigen::Index j = 0; j < n_new; ++j) {
    const double s = (mu.col(j).array() - out.mean[j]).square().sum();
    out.sd[j] = M > 1 ? std::sqrt(s / static_cast<double>(M - 1)) : 0.0;
  }
  return out;
}

}  // namespace cobin::mixed
