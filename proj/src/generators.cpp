#include "cobin/generators.hpp"

#include <cmath>

#include <boost/math/distributions/beta.hpp>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/linalg.hpp"

namespace cobin::eval {

Dgp parse_dgp(const std::string& s) {
  if (s == "beta") return Dgp::beta;
  if (s == "cobin") return Dgp::cobin;
  if (s == "beta_rectangular" || s == "beta-rectangular" || s == "brec") return Dgp::beta_rectangular;
  if (s == "beta_mixture" || s == "beta-mixture" || s == "bmix") return Dgp::beta_mixture;
  throw ConfigError("unknown data-generating family '" + s +
                    "' (expected beta, cobin, beta_rectangular or beta_mixture)");
}

std::string dgp_name(Dgp d) {
  switch (d) {
    case Dgp::beta: return "beta";
    case Dgp::cobin: return "cobin";
    case Dgp::beta_rectangular: return "beta_rectangular";
    case Dgp::beta_mixture: return "beta_mixture";
  }
  return "?";
}

DgpParams DgpParams::defaults(Dgp d) {
  DgpParams p;
  switch (d) {
    case Dgp::beta: p.phi = 8.0; break;
    case Dgp::cobin: p.lambda = 3; break;
    case Dgp::beta_rectangular: p.alpha = 0.2, p.phi = 10.0; break;
    case Dgp::beta_mixture: p.phi = 40.0; break;
  }
  return p;
}

void DgpParams::validate(Dgp d) const {
  if (d == Dgp::cobin) {
    if (lambda < 1) throw ConfigError("cobin generator: lambda must be >= 1");
    return;
  }
  if (!(phi > 0.0)) throw ConfigError("beta generator: phi must be positive");
  if (d == Dgp::beta_rectangular && !(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("beta-rectangular generator: alpha must be in (0, 1)");
  }
}

double rectangular_weight(double mu, double alpha) { return 1.0 - alpha * (1.0 - std::abs(2.0 * mu - 1.0)); }

double mixture_offset(double mu) { return std::min(mu, 1.0 - mu) / 2.0; }

namespace {

double beta_pdf(double y, double mean, double phi) {
  return boost::math::pdf(boost::math::beta_distribution<double>(mean * phi, (1.0 - mean) * phi), y);
}

double beta_draw(double mean, double phi, Rng& rng) { return rng.beta(mean * phi, (1.0 - mean) * phi); }

}  // namespace

double dgp_density(Dgp d, double y, double mu, const DgpParams& p) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("generator: mean must be in (0, 1)");
  switch (d) {
    case Dgp::beta: return beta_pdf(y, mu, p.phi);
    case Dgp::cobin: return std::exp(dist::cobin_log_density(y, {dist::cobit_link(mu), p.lambda}));
    case Dgp::beta_rectangular: {
      const double w = rectangular_weight(mu, p.alpha);
      return w * beta_pdf(y, (mu - 0.5 + 0.5 * w) / w, p.phi) + (1.0 - w);
    }
    case Dgp::beta_mixture: {
      const double e = mixture_offset(mu);
      return 0.25 * beta_pdf(y, mu - e, p.phi) + 0.5 * beta_pdf(y, mu, p.phi) + 0.25 * beta_pdf(y, mu + e, p.phi);
    }
  }
  return 0.0;
}

double dgp_sample(Dgp d, double mu, const DgpParams& p, Rng& rng) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("generator: mean must be in (0, 1)");
  switch (d) {
    case Dgp::beta: return beta_draw(mu, p.phi, rng);
    case Dgp::cobin: return dist::cobin_sample({dist::cobit_link(mu), p.lambda}, rng);
    case Dgp::beta_rectangular: {
      const double w = rectangular_weight(mu, p.alpha);
      if (rng.uniform() < w) return beta_draw((mu - 0.5 + 0.5 * w) / w, p.phi, rng);
      return rng.uniform();
    }
    case Dgp::beta_mixture: {
      const double e = mixture_offset(mu);
      const double v = rng.uniform();
      const double m = v < 0.25 ? mu - e : (v < 0.75 ? mu : mu + e);
      return beta_draw(m, p.phi, rng);
    }
  }
  return 0.0;
}

void DataGeneratorSpec::validate() const {
  if (n < 1) throw ConfigError("generator: n must be >= 1");
  if (beta_true.size() < 1) throw ConfigError("generator: beta_true is empty");
  if (!(x_sd > 0.0)) throw ConfigError("generator: x_sd must be positive");
  params.validate(family);
  if (spatial && !(spatial->sigma2 > 0.0 && spatial->rho > 0.0)) {
    throw ConfigError("generator: spatial sigma2 and rho must be positive");
  }
}

Dataset Dataset::slice(Eigen::Index first, Eigen::Index count) const {
  Dataset d;
  d.X = X.middleRows(first, count);
  d.y = y.segment(first, count);
  d.mu = mu.segment(first, count);
  if (coords.rows() > 0) d.coords = coords.middleRows(first, count);
  if (u.size() > 0) d.u = u.segment(first, count);
  return d;
}

Dataset generate(const DataGeneratorSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.n;
  const auto p = spec.beta_true.size();
  Dataset d;
  if (spec.spatial) {
    d.coords.resize(n, 2);
    for (int i = 0; i < n; ++i) d.coords(i, 0) = rng.uniform(), d.coords(i, 1) = rng.uniform();
    const Eigen::MatrixXd S =
        linalg::exponential_kernel(d.coords, d.coords, spec.spatial->rho) * spec.spatial->sigma2;
    const auto llt = linalg::checked_llt(S, "GP covariance");
    d.u = llt.matrixL() * linalg::standard_normals(n, rng);
  }
  d.X.resize(n, p);
  d.y.resize(n);
  d.mu.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) d.X(i, j) = rng.normal(0.0, spec.x_sd);
    double eta = d.X.row(i).dot(spec.beta_true);
    if (spec.spatial) eta += d.u[i];
    d.mu[i] = glm::mean_of_eta(eta, spec.link);
    d.y[i] = dgp_sample(spec.family, d.mu[i], spec.params, rng);
  }
  return d;
}

}  // namespace cobin::eval
