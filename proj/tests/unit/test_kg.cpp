#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "cobin/error.hpp"
#include "cobin/kg.hpp"
#include "cobin/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace cobin;
using namespace cobin::kg;
using std::numbers::pi;

namespace {

// d_k = 2 pi^2 k^2 + c^2 / 2, the rates of the defining gamma series.
double rate(int k, double c) { return 2.0 * pi * pi * k * k + 0.5 * c * c; }

// E exp(-s kappa) = prod_k (1 + s / d_k)^{-b}, product to K terms plus an
// integral tail estimate of sum log(1 + s / d_k) ~ s / (2 pi^2 k^2).
double laplace_product(int b, double c, double s) {
  const int K = 200000;
  double log_p = 0.0;
  for (int k = 1; k <= K; ++k) log_p -= std::log1p(s / rate(k, c));
  log_p -= s / (2.0 * pi * pi * (K + 0.5));
  return std::exp(b * log_p);
}

double mean_series(double c) {
  double s = 0.0;
  for (int k = 1; k <= 2000000; ++k) s += 1.0 / rate(k, c);
  return s + 1.0 / (2.0 * pi * pi * (2000000 + 0.5));
}

// Untilted GIG(-3/2, c^2, 1/4) kernel.
double gig_kernel(double x, double c) {
  if (!(x > 0.0)) return 0.0;
  return std::exp(-2.5 * std::log(x) - 0.5 * (c * c * x + 0.25 / x));
}

// Partial sum S_m(x) with all terms on the same side of the cutoff.
double partial_sum(int m, double x, double c, const EnvelopeConfig& cfg) {
  double s = 0.0;
  for (int n = 0; n <= m; ++n) s += (n % 2 == 0 ? 1.0 : -1.0) * kg1_density_term(n, x, c, cfg);
  return s;
}

}  // namespace

TEST_CASE("cutoff range and parameter validation") {
  CHECK(kCutoffLower == doctest::Approx(std::log(2.0) / (3.0 * pi * pi)));
  CHECK_NOTHROW((EnvelopeConfig{}).validate());
  CHECK_THROWS_AS((EnvelopeConfig{0.01}).validate(), DomainError);
  CHECK_THROWS_AS((EnvelopeConfig{0.3}).validate(), DomainError);
  CHECK_THROWS_AS((KGParams{0, 1.0}).validate(), DomainError);
  CHECK_THROWS_AS(kg_laplace(KGParams{1, 0.0}, -1.0), DomainError);
}

TEST_CASE("mean matches the defining series") {
  CHECK(kg_mean({1, 0.0}) == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  for (double c : {1e-4, 5e-3, 0.011, 0.5, 2.0, 10.134, 100.0}) {
    CAPTURE(c);
    CHECK(kg_mean({1, c}) == doctest::Approx(mean_series(c)).epsilon(1e-9));
    CHECK(kg_mean({3, -c}) == doctest::Approx(3.0 * mean_series(c)).epsilon(1e-9));
  }
}

TEST_CASE("Laplace transform matches the infinite product") {
  CHECK(kg_laplace({1, 0.0}, 2.0) == doctest::Approx(0.850918).epsilon(1e-6));
  for (int b : {1, 4}) {
    for (double c : {0.0, 1.5, 12.0}) {
      for (double s : {0.1, 2.0, 30.0}) {
        CAPTURE(b);
        CAPTURE(c);
        CAPTURE(s);
        CHECK(kg_laplace({b, c}, s) == doctest::Approx(laplace_product(b, c, s)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("density term at a hand-computed point and monotone in n") {
  const EnvelopeConfig cfg;
  CHECK(kg1_density_term(0, 1.0, 0.0, cfg) ==
        doctest::Approx(4.0 * pi * pi * std::exp(-2.0 * pi * pi)).epsilon(1e-14));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = 0.005 + 0.8 * rng.uniform();
    const double c = 20.0 * rng.uniform() - 10.0;
    CHECK(kg1_density_term(1, x, c, cfg) < kg1_density_term(0, x, c, cfg));
    CHECK(kg1_density_term(3, x, c, cfg) < kg1_density_term(2, x, c, cfg));
  }
  CHECK_THROWS_AS(kg1_density_term(0, 1.0, 0.0, EnvelopeConfig{0.5}), DomainError);
}

TEST_CASE("partial sums bracket the density") {
  const EnvelopeConfig cfg;
  for (double c : {0.0, 2.0, 10.0}) {
    for (double x : {0.02, 0.04, 0.2, 0.6}) {
      const double f = kg1_density(x, c);
      CAPTURE(c);
      CAPTURE(x);
      double prev_odd = -1.0;
      double prev_even = 1e300;
      for (int m = 0; m <= 6; ++m) {
        const double s = partial_sum(m, x, c, cfg);
        if (m % 2 == 0) {
          CHECK(s >= f * (1.0 - 1e-13));
          CHECK(s <= prev_even);
          prev_even = s;
        } else {
          CHECK(s <= f * (1.0 + 1e-13));
          CHECK(s >= prev_odd);
          prev_odd = s;
        }
      }
    }
  }
}

TEST_CASE("density integrates to one and matches its Laplace transform") {
  for (double c : {0.0, 1.0, 5.0, 20.0}) {
    auto f = [&](double x) { return kg1_density(x, c); };
    const double mass =
        testutil::integrate_ts(f, 0.0, kDefaultCutoff, 1e-13) + testutil::integrate_inf(f, kDefaultCutoff);
    CAPTURE(c);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    for (double s : {0.5, 4.0}) {
      auto g = [&](double x) { return std::exp(-s * x) * kg1_density(x, c); };
      const double lt = testutil::integrate_ts(g, 0.0, kDefaultCutoff, 1e-13) +
                        testutil::integrate_inf(g, kDefaultCutoff);
      CHECK(lt == doctest::Approx(laplace_product(1, c, s)).epsilon(1e-8));
    }
  }
}

TEST_CASE("tilting identity holds pointwise") {
  for (double c : {0.7, 3.0, 15.0}) {
    for (double x : {0.01, 0.05, 0.3, 1.2}) {
      const double sinhc = std::sinh(0.5 * c) / (0.5 * c);
      CHECK(kg1_density(x, c) ==
            doctest::Approx(sinhc * std::exp(-0.5 * c * c * x) * kg1_density(x, 0.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("CDF matches quadrature of the density") {
  for (double c : {0.0, 2.0, 10.134}) {
    auto f = [&](double x) { return kg1_density(x, c); };
    for (double x : {0.02, 0.05, 0.1, 0.1000001, 0.2, 0.5}) {
      double ref = testutil::integrate_ts(f, 0.0, std::min(x, kDefaultCutoff), 1e-13);
      if (x > kDefaultCutoff) ref += testutil::integrate(f, kDefaultCutoff, x);
      CAPTURE(c);
      CAPTURE(x);
      CHECK(std::fabs(kg1_cdf(x, c) - ref) < 1e-11);
    }
  }
  CHECK(kg1_cdf(0.0, 1.0) == 0.0);
  CHECK(kg1_cdf(std::numeric_limits<double>::infinity(), 1.0) == 1.0);
}

TEST_CASE("GIG proposal CDF") {
  // c = 0: inverse gamma (3/2, 1/8), so P(X <= x) = Q(3/2, 1/(8x))
  CHECK(gig_half_cdf(kDefaultCutoff, 0.0) == doctest::Approx(0.1735472).epsilon(5e-7 / 0.1735));
  for (double x : {0.01, 0.05, 0.3, 2.0}) {
    CHECK(gig_half_cdf(x, 0.0) ==
          doctest::Approx(boost::math::gamma_q(1.5, 1.0 / (8.0 * x))).epsilon(1e-12));
  }
  CHECK(gig_half_cdf(std::numeric_limits<double>::infinity(), 3.0) == 1.0);
  for (double c : {0.3, 3.0, 25.0}) {
    auto k = [&](double x) { return gig_kernel(x, c); };
    const double total = testutil::integrate_ts(k, 0.0, 0.1, 1e-14) + testutil::integrate_inf(k, 0.1);
    for (double x : {0.02, 0.1, 0.7}) {
      const double part = testutil::integrate_ts(k, 0.0, x, 1e-14);
      CAPTURE(c);
      CAPTURE(x);
      CHECK(gig_half_cdf(x, c) == doctest::Approx(part / total).epsilon(1e-10));
    }
  }
}

TEST_CASE("GIG samplers follow the CDF") {
  Rng rng(17);
  for (double c : {0.0, 1.0, 7.0}) {
    std::vector<double> x(50000);
    for (auto& v : x) v = gig_half_sample(c, rng);
    const auto ks = testutil::ks_test(x, [&](double z) { return gig_half_cdf(z, c); });
    CAPTURE(c);
    CHECK(ks.p > 1e-3);
    for (auto& v : x) v = gig_half_sample_trunc(c, kDefaultCutoff, rng);
    const double ft = gig_half_cdf(kDefaultCutoff, c);
    const auto kst = testutil::ks_test(x, [&](double z) { return gig_half_cdf(z, c) / ft; });
    CHECK(kst.p > 1e-3);
  }
}

TEST_CASE("envelope constants") {
  const EnvelopeConfig cfg;
  CHECK(envelope_outer_mean(0.0, cfg) == doctest::Approx(1.089002).epsilon(1e-6));
  CHECK(envelope_outer_mean(10.134, cfg) == doctest::Approx(1.145583).epsilon(1e-6));
  // the reference inner-loop figures were evaluated at c = 10.34
  CHECK(envelope_inner_mean(10.34, cfg) == doctest::Approx(1.1274624).epsilon(1e-7));
  CHECK(envelope_term_mass(1, 10.34, cfg) == doctest::Approx(0.127).epsilon(0.0005 / 0.127));
  CHECK(envelope_term_mass(2, 10.34, cfg) == doctest::Approx(2.068e-4).epsilon(2e-3));
  CHECK(envelope_term_mass(3, 10.34, cfg) == doctest::Approx(2.226e-7).epsilon(0.0005 / 2.226));
  CHECK(envelope_term_mass(4, 10.34, cfg) == doctest::Approx(3.124e-11).epsilon(0.0005 / 3.124));
  double worst = 0.0;
  for (double c = 0.0; c <= 60.0; c += 0.05) worst = std::max(worst, envelope_outer_mean(c, cfg));
  CHECK(worst <= 1.1456);
  CHECK(worst == doctest::Approx(1.145583).epsilon(1e-6));
  // the inner bound is stated to 5 digits; its exact maximum is about 1.12751
  double worst_inner = 0.0;
  for (double c = 0.0; c <= 60.0; c += 0.05) worst_inner = std::max(worst_inner, envelope_inner_mean(c, cfg));
  CHECK(worst_inner < 1.1275 + 0.5e-4);
  CHECK(worst_inner > 1.1275);
}

TEST_CASE("envelope mass matches quadrature of the leading term") {
  for (double c : {0.0, 4.0, 10.134}) {
    const EnvelopeConfig cfg;
    auto a0 = [&](double x) { return x > 0.0 ? kg1_density_term(0, x, c, cfg) : 0.0; };
    const double m = testutil::integrate_ts(a0, 0.0, cfg.t, 1e-14) + testutil::integrate_inf(a0, cfg.t);
    CHECK(envelope_outer_mean(c, cfg) == doctest::Approx(m).epsilon(1e-10));
    auto a1 = [&](double x) { return x > 0.0 ? kg1_density_term(1, x, c, cfg) : 0.0; };
    const double m1 = testutil::integrate_ts(a1, 0.0, cfg.t, 1e-14) + testutil::integrate_inf(a1, cfg.t);
    CHECK(envelope_term_mass(1, c, cfg) == doctest::Approx(m1 / m).epsilon(1e-9));
  }
}

TEST_CASE("KG(1, c) draws pass KS and moment checks") {
  const EnvelopeConfig cfg;
  Rng rng(99);
  for (double c : {0.0, 1.0, 5.0, 20.0}) {
    std::vector<double> x(100000);
    for (auto& v : x) v = sample_kg1(c, cfg, rng).value;
    const auto ks = testutil::ks_test(x, [&](double z) { return kg1_cdf(z, c); });
    const auto mo = testutil::moments(x);
    CAPTURE(c);
    CHECK(ks.p > 0.01);
    CHECK(std::fabs(mo.mean - kg_mean({1, c})) < 5.0 * mo.se);
  }
}

TEST_CASE("draws at c and -c agree in law") {
  const EnvelopeConfig cfg;
  Rng r1(1);
  Rng r2(2);
  std::vector<double> a(50000);
  std::vector<double> b(50000);
  for (auto& v : a) v = sample_kg1(3.3, cfg, r1).value;
  for (auto& v : b) v = sample_kg1(-3.3, cfg, r2).value;
  CHECK(testutil::ks_test2(a, b).p > 1e-3);
}

TEST_CASE("instrumentation counters match the envelope expectations") {
  const EnvelopeConfig cfg;
  Rng rng(7);
  for (double c : {0.0, 10.134}) {
    const int n = 200000;
    std::vector<double> outer(n);
    long long proposals = 0;
    long long terms = 0;
    for (int i = 0; i < n; ++i) {
      const KGDraw d = sample_kg1(c, cfg, rng);
      outer[i] = d.outer_iters;
      proposals += d.outer_iters;
      terms += d.inner_terms;
    }
    const auto mo = testutil::moments(outer);
    CAPTURE(c);
    CHECK(std::fabs(mo.mean - envelope_outer_mean(c, cfg)) < 5.0 * mo.se);
    // per-proposal decision index: m = 1 w.p. 1 - q, else >= 2; q = int a_1 / M
    const double inner = static_cast<double>(terms) / proposals;
    const double q = envelope_term_mass(1, c, cfg);
    const double se = std::sqrt(q * (1.0 - q) / proposals);
    CHECK(std::fabs(inner - envelope_inner_mean(c, cfg)) < 5.0 * se);
  }
}

TEST_CASE("sum of b draws") {
  const EnvelopeConfig cfg;
  Rng a(4);
  Rng b(4);
  CHECK(sample_kg({1, 2.0}, cfg, a) == sample_kg1(2.0, cfg, b).value);
  Rng rng(8);
  const int n = 100000;
  std::vector<double> x(n);
  for (auto& v : x) v = sample_kg({2, 0.0}, cfg, rng);
  const auto mo = testutil::moments(x);
  CHECK(std::fabs(mo.mean - 1.0 / 6.0) < 5.0 * mo.se);
  std::vector<double> e(n);
  for (auto& v : e) v = std::exp(-sample_kg({5, 4.0}, cfg, rng));
  const auto me = testutil::moments(e);
  CHECK(std::fabs(me.mean - kg_laplace({5, 4.0}, 1.0)) < 5.0 * me.se);
}
