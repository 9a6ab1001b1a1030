#include "cobin/glm.hpp"

#include <algorithm>
#include <cmath>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/kg.hpp"

namespace cobin::glm {

namespace {

constexpr double kMuFloor = 1e-12;
constexpr int kMaxHalvings = 30;
constexpr double kDivergedEta = 1e8;

struct LinkEval {
  double theta;
  double mu;
  double dmu_deta;
  double bpp;  // B''(theta)
};

LinkEval eval_link(double eta, Link link) {
  LinkEval e;
  if (link == Link::cobit) {
    const dist::CumulantTriple k = dist::cumulant(eta);
    e.theta = eta;
    e.mu = k.bp;
    e.dmu_deta = k.bpp;
    e.bpp = k.bpp;
    return e;
  }
  double mu = 1.0 / (1.0 + std::exp(-eta));
  mu = std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
  e.mu = mu;
  e.dmu_deta = mu * (1.0 - mu);
  e.theta = dist::cobit_link(mu);
  e.bpp = dist::cumulant(e.theta).bpp;
  return e;
}

void check_rank(const Eigen::MatrixXd& X) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    throw DomainError("glm: design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                      " < " + std::to_string(X.cols()) + ")");
  }
}

Eigen::MatrixXd prior_precision(const RegressionModel& m) {
  const auto p = m.X.cols();
  if (!m.prior_cov) return Eigen::MatrixXd::Zero(p, p);
  Eigen::LLT<Eigen::MatrixXd> llt(*m.prior_cov);
  if (llt.info() != Eigen::Success) throw DomainError("glm: prior covariance is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(p, p));
}

}  // namespace

Link parse_link(const std::string& s) {
  if (s == "cobit") return Link::cobit;
  if (s == "logit") return Link::logit;
  throw ConfigError("unknown link '" + s + "' (expected cobit or logit)");
}

std::string link_name(Link link) { return link == Link::cobit ? "cobit" : "logit"; }

void RegressionModel::validate() const {
  if (X.rows() != y.size()) throw DomainError("glm: X and y have different numbers of rows");
  if (X.rows() < X.cols()) throw DomainError("glm: fewer observations than coefficients");
  if (!X.allFinite()) throw DomainError("glm: X has non-finite entries");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] >= 0.0 && y[i] <= 1.0)) {
      throw DomainError("glm: response " + std::to_string(i) + " = " + std::to_string(y[i]) +
                        " outside [0, 1]");
    }
  }
  if (prior_cov && (prior_cov->rows() != X.cols() || prior_cov->cols() != X.cols())) {
    throw DomainError("glm: prior covariance has the wrong shape");
  }
}

bool RegressionModel::has_boundary() const {
  return (y.array() == 0.0).any() || (y.array() == 1.0).any();
}

double theta_of_eta(double eta, Link link) { return eval_link(eta, link).theta; }
double mean_of_eta(double eta, Link link) { return eval_link(eta, link).mu; }

double loglik_kernel(const RegressionModel& m, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = m.X * beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double th = theta_of_eta(eta[i], m.link);
    s += m.y[i] * th - dist::log_partition(th);
  }
  return s;
}

Eigen::VectorXd score(const RegressionModel& m, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = m.X * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const LinkEval e = eval_link(eta[i], m.link);
    r[i] = (m.y[i] - e.mu) * e.dmu_deta / e.bpp;
  }
  return m.X.transpose() * r;
}

FitResult irls_fit(const RegressionModel& m, const FitOptions& opt,
                   const std::optional<Eigen::VectorXd>& start) {
  m.validate();
  check_rank(m.X);
  const auto n = m.X.rows();
  const auto p = m.X.cols();
  FitResult out;
  Eigen::VectorXd beta = start ? *start : Eigen::VectorXd::Zero(p);
  if (beta.size() != p) throw DomainError("glm: start vector has the wrong length");
  double ll = loglik_kernel(m, beta);
  for (int it = 0; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd eta = m.X * beta;
    Eigen::VectorXd w(n);
    Eigen::VectorXd z(n);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const LinkEval e = eval_link(eta[i], m.link);
      w[i] = e.dmu_deta * e.dmu_deta / e.bpp;
      z[i] = eta[i] + (m.y[i] - e.mu) / e.dmu_deta;
      r[i] = (m.y[i] - e.mu) * e.dmu_deta / e.bpp;
    }
    out.grad_norm = (m.X.transpose() * r).norm();
    out.iterations = it;
    out.trace.push_back(ll);
    if (out.grad_norm < opt.tol) {
      out.converged = true;
      break;
    }
    if (it == opt.max_iter) break;
    const Eigen::MatrixXd info = m.X.transpose() * w.asDiagonal() * m.X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw NumericalError("glm: IRLS information matrix is singular");
    Eigen::VectorXd next = ldlt.solve(m.X.transpose() * (w.asDiagonal() * z));
    double ll_next = loglik_kernel(m, next);
    for (int h = 0; h < kMaxHalvings && !(ll_next >= ll - 1e-12 * std::fabs(ll)); ++h) {
      next = 0.5 * (beta + next);
      ll_next = loglik_kernel(m, next);
    }
    if (!std::isfinite(ll_next)) throw NumericalError("glm: IRLS produced a non-finite likelihood");
    beta = next;
    ll = ll_next;
  }
  // a vanishing score with a runaway linear predictor means the MLE does not exist
  if (out.converged && (m.X * beta).cwiseAbs().maxCoeff() > kDivergedEta) out.converged = false;
  out.beta = beta;
  out.loglik = ll;
  return out;
}

Eigen::VectorXd em_weights(const Eigen::VectorXd& eta, int lambda) {
  Eigen::VectorXd k(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) k[i] = kg::kg_mean({lambda, eta[i]});
  return k;
}

FitResult em_map(const RegressionModel& m, int lambda, const EmOptions& opt,
                 const std::optional<Eigen::VectorXd>& start) {
  m.validate();
  if (m.link != Link::cobit) throw DomainError("glm: EM requires the canonical cobit link");
  if (lambda < 1) throw DomainError("glm: lambda must be a positive integer");
  if (lambda >= 2 && m.has_boundary()) {
    throw DomainError(
        "glm: responses at 0 or 1 have zero density for lambda >= 2; use the micobin model");
  }
  const auto p = m.X.cols();
  if (!m.prior_cov) check_rank(m.X);
  const Eigen::MatrixXd prec = prior_precision(m);
  const Eigen::VectorXd rhs = m.X.transpose() * (lambda * (m.y.array() - 0.5)).matrix();
  auto objective = [&](const Eigen::VectorXd& b) {
    return lambda * loglik_kernel(m, b) - 0.5 * b.dot(prec * b);
  };
  FitResult out;
  out.lambda = lambda;
  Eigen::VectorXd beta = start ? *start : Eigen::VectorXd::Zero(p);
  double obj = objective(beta);
  out.trace.push_back(obj);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd k = em_weights(m.X * beta, lambda);
    const Eigen::MatrixXd a = m.X.transpose() * k.asDiagonal() * m.X + prec;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("glm: EM M-step matrix not positive definite");
    const Eigen::VectorXd next = llt.solve(rhs);
    const double obj_next = objective(next);
    const double step = (next - beta).cwiseAbs().maxCoeff();
    const double rel = std::fabs(obj_next - obj) / std::max(1.0, std::fabs(obj));
    beta = next;
    obj = obj_next;
    out.trace.push_back(obj);
    out.iterations = it;
    if (rel < opt.rel_tol && step < opt.step_tol) {
      out.converged = true;
      break;
    }
  }
  out.beta = beta;
  out.loglik = lambda * loglik_kernel(m, beta);
  Eigen::VectorXd g = lambda * score(m, beta) - prec * beta;
  out.grad_norm = g.norm();
  return out;
}

ProfileResult profile_lambda(const RegressionModel& m, const Eigen::VectorXd& beta_hat, int Lmax) {
  m.validate();
  if (Lmax < 1) throw DomainError("glm: Lmax must be >= 1");
  const Eigen::VectorXd eta = m.X * beta_hat;
  const auto n = eta.size();
  std::vector<double> theta(n);
  std::vector<double> b(n);
  double lin = 0.0;  // sum_i (y_i theta_i - B(theta_i))
  for (Eigen::Index i = 0; i < n; ++i) {
    theta[i] = theta_of_eta(eta[i], m.link);
    b[i] = dist::log_partition(theta[i]);
    lin += m.y[i] * theta[i] - b[i];
  }
  ProfileResult out;
  out.objective.assign(Lmax, -std::numeric_limits<double>::infinity());
  const bool boundary = m.has_boundary();
  std::vector<double> hsum(Lmax, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double> lh = dist::irwin_hall_log_table(m.y[i], Lmax);
    for (int l = 0; l < Lmax; ++l) hsum[l] += lh[l];
  }
  int best = 1;
  for (int l = 1; l <= Lmax; ++l) {
    if (boundary && l >= 2) break;
    out.objective[l - 1] = hsum[l - 1] + l * lin;
    if (out.objective[l - 1] > out.objective[best - 1]) best = l;
  }
  out.lambda = best;
  return out;
}

ProfiledFit fit_with_profile(const RegressionModel& m, int Lmax) {
  m.validate();
  ProfiledFit out;
  if (!m.prior_cov || m.link != Link::cobit) {
    out.fit = irls_fit(m);
    out.profile = profile_lambda(m, out.fit.beta, Lmax);
    out.fit.lambda = out.profile.lambda;
    out.fit.loglik = out.profile.lambda * out.fit.loglik;
    return out;
  }
  const Eigen::MatrixXd prec = prior_precision(m);
  Eigen::LLT<Eigen::MatrixXd> llt(*m.prior_cov);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const int top = m.has_boundary() ? 1 : Lmax;
  out.profile.objective.assign(Lmax, -std::numeric_limits<double>::infinity());
  std::optional<Eigen::VectorXd> warm;
  for (int l = 1; l <= top; ++l) {
    FitResult f = em_map(m, l, {}, warm);
    warm = f.beta;
    const ProfileResult pr = profile_lambda(m, f.beta, l);
    const double log_prior = -0.5 * f.beta.dot(prec * f.beta) - 0.5 * log_det -
                             0.5 * static_cast<double>(f.beta.size()) * std::log(2.0 * M_PI);
    out.profile.objective[l - 1] = pr.objective[l - 1] + log_prior;
    if (l == 1 || out.profile.objective[l - 1] > out.profile.objective[out.profile.lambda - 1]) {
      out.profile.lambda = l;
      out.fit = f;
    }
  }
  return out;
}

}  // namespace cobin::glm
