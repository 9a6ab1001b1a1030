#include <cmath>
#include <vector>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/glm.hpp"
#include "cobin/rng.hpp"
#include "doctest.h"

using namespace cobin;
using namespace cobin::glm;

namespace {

RegressionModel simulate(int n, int lambda, Link link, std::uint64_t seed, double sx = 3.0) {
  Rng rng(seed);
  RegressionModel m;
  m.link = link;
  m.X.resize(n, 2);
  m.y.resize(n);
  for (int i = 0; i < n; ++i) {
    m.X(i, 0) = 1.0;
    m.X(i, 1) = rng.normal(0.0, sx);
    const double th = theta_of_eta(m.X(i, 1), link);
    m.y[i] = dist::cobin_sample({th, lambda}, rng);
  }
  return m;
}

}  // namespace

TEST_CASE("link functions") {
  CHECK(parse_link("cobit") == Link::cobit);
  CHECK(parse_link("logit") == Link::logit);
  CHECK_THROWS_AS(parse_link("probit"), ConfigError);
  CHECK(mean_of_eta(0.0, Link::logit) == 0.5);
  CHECK(mean_of_eta(2.0, Link::cobit) == doctest::Approx(dist::cumulant(2.0).bp));
  CHECK(dist::cumulant(theta_of_eta(1.3, Link::logit)).bp ==
        doctest::Approx(1.0 / (1.0 + std::exp(-1.3))).epsilon(1e-12));
}

TEST_CASE("noise-free means recover the coefficients") {
  const Eigen::Vector2d beta0(0.4, -0.8);
  for (Link link : {Link::cobit, Link::logit}) {
    Rng rng(3);
    RegressionModel m;
    m.link = link;
    m.X.resize(60, 2);
    m.y.resize(60);
    for (int i = 0; i < 60; ++i) {
      m.X(i, 0) = 1.0;
      m.X(i, 1) = rng.normal(0.0, 2.0);
      m.y[i] = mean_of_eta(m.X.row(i).dot(beta0), link);
    }
    const FitResult f = irls_fit(m);
    CHECK(f.converged);
    CHECK((f.beta - beta0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("analytic score matches central differences") {
  Rng rng(11);
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Link link = rep % 2 == 0 ? Link::cobit : Link::logit;
    RegressionModel m = simulate(30, 1 + rep % 4, link, 100 + rep, 1.5);
    Eigen::Vector2d b(rng.normal(0.0, 0.5), rng.normal(0.0, 0.5));
    const Eigen::VectorXd g = score(m, b);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd bp = b;
      Eigen::VectorXd bm = b;
      bp[j] += h;
      bm[j] -= h;
      const double fd = (loglik_kernel(m, bp) - loglik_kernel(m, bm)) / (2.0 * h);
      CHECK(std::fabs(fd - g[j]) <= 1e-6 * std::max(1.0, std::fabs(g[j])));
      ++checked;
    }
  }
  CHECK(checked == 100);
}

TEST_CASE("IRLS converges to a score root from random starts") {
  for (Link link : {Link::cobit, Link::logit}) {
    const RegressionModel m = simulate(400, 3, link, 5, link == Link::cobit ? 3.0 : 1.0);
    const FitResult f = irls_fit(m);
    CHECK(f.converged);
    CHECK(f.grad_norm < 1e-8);
    CHECK(score(m, f.beta).norm() < 1e-8);
    Rng rng(9);
    for (int s = 0; s < 10; ++s) {
      Eigen::VectorXd start(2);
      start << rng.normal(0.0, 2.0), rng.normal(0.0, 2.0);
      const FitResult g = irls_fit(m, {}, start);
      CHECK(g.converged);
      CHECK((g.beta - f.beta).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("concavity under the canonical link") {
  const RegressionModel m = simulate(200, 2, Link::cobit, 6);
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::Vector2d b(rng.normal(), rng.normal());
    Eigen::Vector2d d(rng.normal(), rng.normal());
    const double h = 1e-3;
    const double second =
        loglik_kernel(m, b + h * d) - 2.0 * loglik_kernel(m, b) + loglik_kernel(m, b - h * d);
    CHECK(second <= 1e-9);
  }
}

TEST_CASE("rank deficiency and bad inputs are rejected") {
  RegressionModel m = simulate(20, 1, Link::cobit, 2);
  m.X.col(1) = m.X.col(0);
  CHECK_THROWS_AS(irls_fit(m), DomainError);
  RegressionModel bad = simulate(20, 1, Link::cobit, 2);
  bad.y[3] = 1.2;
  CHECK_THROWS_AS(irls_fit(bad), DomainError);
  RegressionModel small;
  small.X = Eigen::MatrixXd::Ones(1, 2);
  small.y = Eigen::VectorXd::Constant(1, 0.5);
  CHECK_THROWS_AS(irls_fit(small), DomainError);
}

TEST_CASE("EM first weights are lambda / 12 at eta = 0") {
  const Eigen::VectorXd w = em_weights(Eigen::VectorXd::Zero(5), 4);
  for (int i = 0; i < 5; ++i) CHECK(w[i] == doctest::Approx(4.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("EM ascends and its flat-prior limit equals IRLS for every lambda") {
  const RegressionModel m = simulate(300, 3, Link::cobit, 12);
  const FitResult irls = irls_fit(m);
  for (int lambda : {1, 3, 8}) {
    const FitResult em = em_map(m, lambda);
    CHECK(em.converged);
    CHECK((em.beta - irls.beta).cwiseAbs().maxCoeff() < 1e-6);
    for (std::size_t t = 1; t < em.trace.size(); ++t) {
      CHECK(em.trace[t] >= em.trace[t - 1] - 1e-9 * std::fabs(em.trace[t - 1]));
    }
  }
}

TEST_CASE("EM with a prior reaches a stationary point of the log posterior") {
  RegressionModel m = simulate(80, 2, Link::cobit, 13);
  m.prior_cov = Eigen::MatrixXd::Identity(2, 2) * 0.25;
  const FitResult em = em_map(m, 2);
  CHECK(em.converged);
  const Eigen::VectorXd g = 2.0 * score(m, em.beta) - 4.0 * em.beta;
  CHECK(g.norm() < 1e-5);
  for (std::size_t t = 1; t < em.trace.size(); ++t) CHECK(em.trace[t] >= em.trace[t - 1] - 1e-9);
  // shrinkage toward zero relative to the MLE
  CHECK(em.beta.norm() < irls_fit(m).beta.norm());
}

TEST_CASE("EM refuses boundary responses for lambda >= 2 and logit") {
  RegressionModel m = simulate(50, 1, Link::cobit, 14);
  m.y[0] = 0.0;
  CHECK_NOTHROW(em_map(m, 1));
  try {
    em_map(m, 2);
    CHECK(false);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("micobin") != std::string::npos);
  }
  RegressionModel l = simulate(50, 1, Link::logit, 14, 1.0);
  CHECK_THROWS_AS(em_map(l, 1), DomainError);
}

TEST_CASE("lambda profiling") {
  std::vector<int> hits(8, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const RegressionModel m = simulate(4000, 3, Link::cobit, 200 + rep);
    const FitResult f = irls_fit(m);
    const ProfileResult pr = profile_lambda(m, f.beta, 70);
    CHECK(pr.objective.size() == 70);
    CHECK(pr.lambda >= 2);
    CHECK(pr.lambda <= 4);
    hits[pr.lambda]++;
  }
  CHECK(hits[3] >= 3);
  const RegressionModel tiny = simulate(10, 2, Link::cobit, 15);
  const ProfileResult pt = profile_lambda(tiny, irls_fit(tiny).beta, 70);
  CHECK(pt.lambda >= 1);
  CHECK(pt.lambda <= 70);
  RegressionModel edge = simulate(40, 1, Link::cobit, 16);
  edge.y[0] = 1.0;
  CHECK(profile_lambda(edge, irls_fit(edge).beta, 70).lambda == 1);
}

TEST_CASE("profiled fit with a prior reruns EM per lambda") {
  RegressionModel m = simulate(300, 4, Link::cobit, 17);
  m.prior_cov = Eigen::MatrixXd::Identity(2, 2) * 100.0;
  const ProfiledFit pf = fit_with_profile(m, 12);
  CHECK(pf.fit.lambda.value() == pf.profile.lambda);
  CHECK(pf.profile.lambda >= 3);
  CHECK(pf.profile.lambda <= 6);
  const ProfiledFit flat = fit_with_profile(simulate(300, 4, Link::cobit, 17), 12);
  CHECK(std::fabs(flat.fit.beta[1] - pf.fit.beta[1]) < 0.01);
}

TEST_CASE("separated responses are reported as non-convergent") {
  RegressionModel m;
  const int n = 20;
  m.X.resize(n, 2);
  m.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i - 9.5) / 3.0;
    m.X(i, 0) = 1.0;
    m.X(i, 1) = x;
    m.y[i] = x > 0.0 ? 1.0 : 0.0;
  }
  CHECK_FALSE(irls_fit(m).converged);
}
