#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/kernels.hpp"
#include "doctest.h"

using namespace cobin;
using namespace cobin::kernels;

namespace {

/// Sets COBIN_THREADS for the lifetime of the guard.
struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("COBIN_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("COBIN_THREADS"); }
};

std::vector<double> tilts(std::size_t n) {
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = -6.0 + 12.0 * static_cast<double>(i % 97) / 96.0;
  return c;
}

}  // namespace

TEST_CASE("COBIN_THREADS parsing") {
  unsetenv("COBIN_THREADS");
  CHECK(thread_count() >= 1);
  {
    ThreadsEnv e("3");
    CHECK(thread_count() == 3);
  }
  for (const char* bad : {"0", "-2", "abc", "3x", ""}) {
    ThreadsEnv e(bad);
    CHECK_THROWS_AS(thread_count(), ConfigError);
  }
}

TEST_CASE("kg_batch gives the same draws serially and in parallel") {
  const std::size_t n = 3 * kBlock + 123;
  const std::vector<double> c = tilts(n);
  const std::vector<int> b{1};
  const kg::EnvelopeConfig cfg;
  std::vector<double> serial(n), par1(n), par4(n);
  kg_batch(b, c, serial, 42, cfg, Exec::serial);
  {
    ThreadsEnv e("1");
    kg_batch(b, c, par1, 42, cfg, Exec::parallel);
  }
  {
    ThreadsEnv e("4");
    kg_batch(b, c, par4, 42, cfg, Exec::parallel);
  }
  CHECK(serial == par1);
  CHECK(serial == par4);

  // a block's draws do not depend on how many blocks follow it
  std::vector<double> prefix(kBlock);
  kg_batch(b, std::span<const double>(c.data(), kBlock), prefix, 42, cfg, Exec::serial);
  CHECK(std::equal(prefix.begin(), prefix.end(), serial.begin()));

  std::vector<double> other(n);
  kg_batch(b, c, other, 43, cfg, Exec::serial);
  CHECK(other != serial);
}

TEST_CASE("kg_batch moments and per-element shapes") {
  const std::size_t n = 200000;
  const kg::EnvelopeConfig cfg;
  std::vector<double> c(n, 2.0), out(n);
  std::vector<int> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = 1 + static_cast<int>(i % 3);
  kg_batch(b, c, out, 7, cfg, Exec::parallel);
  for (int shape = 1; shape <= 3; ++shape) {
    double s = 0.0, ss = 0.0, m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (b[i] != shape) continue;
      s += out[i];
      ss += out[i] * out[i];
      m += 1.0;
    }
    const double mean = s / m;
    const double se = std::sqrt((ss / m - mean * mean) / m);
    CHECK(std::fabs(mean - kg::kg_mean({shape, 2.0})) < 4.0 * se);
  }
}

TEST_CASE("kg_batch input checks") {
  const kg::EnvelopeConfig cfg;
  std::vector<double> c(10, 0.0), out(9);
  const std::vector<int> b{1};
  CHECK_THROWS_AS(kg_batch(b, c, out, 1, cfg, Exec::serial), DomainError);
  std::vector<double> out10(10);
  const std::vector<int> b3{1, 1, 1};
  CHECK_THROWS_AS(kg_batch(b3, c, out10, 1, cfg, Exec::serial), DomainError);
  kg::EnvelopeConfig bad;
  bad.t = 0.3;
  CHECK_THROWS_AS(kg_batch(b, c, out10, 1, bad, Exec::serial), DomainError);
}

TEST_CASE("log_h_table matches the per-observation table in both modes") {
  Eigen::VectorXd y(300);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = (static_cast<double>(i) + 0.5) / 300.0;
  const int L = 40;
  const Eigen::MatrixXd s = log_h_table(y, L, Exec::serial);
  Eigen::MatrixXd p;
  {
    ThreadsEnv e("3");
    p = log_h_table(y, L, Exec::parallel);
  }
  CHECK(s == p);
  for (Eigen::Index i : {0, 17, 150, 299}) {
    const std::vector<double> row = dist::irwin_hall_log_table(y[i], L);
    for (int l = 0; l < L; ++l) CHECK(s(i, l) == row[l]);
  }
  const Eigen::VectorXd sums = log_h_sums(y, L, Exec::parallel);
  CHECK((sums - s.colwise().sum().transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("lambda_grid_loglik equals summed cobin log densities") {
  Eigen::VectorXd y(50), th(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    y[i] = 0.02 + 0.96 * static_cast<double>(i) / 49.0;
    th[i] = -3.0 + 0.13 * static_cast<double>(i);
  }
  const int L = 12;
  const Eigen::VectorXd g = lambda_grid_loglik(y, th, L, Exec::serial);
  for (int l = 1; l <= L; ++l) {
    double direct = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) direct += dist::cobin_log_density(y[i], {th[i], l});
    CHECK(g[l - 1] == doctest::Approx(direct).epsilon(1e-10));
  }
  CHECK_THROWS_AS(lambda_grid_loglik(y, th.head(3), L, Exec::serial), DomainError);
}

TEST_CASE("map_replicates keeps order, streams and errors") {
  const std::function<double(int, Rng&)> fn = [](int r, Rng& rng) { return r + rng.uniform(); };
  const auto s = map_replicates<double>(37, 5, fn, Exec::serial);
  std::vector<double> p;
  {
    ThreadsEnv e("4");
    p = map_replicates<double>(37, 5, fn, Exec::parallel);
  }
  CHECK(s == p);
  for (int r = 0; r < 37; ++r) {
    Rng rng(5, static_cast<std::uint64_t>(r));
    CHECK(s[static_cast<std::size_t>(r)] == r + rng.uniform());
  }
  const std::function<double(int, Rng&)> bad = [](int r, Rng&) -> double {
    if (r == 11) throw NumericalError("boom");
    return 0.0;
  };
  CHECK_THROWS_AS(map_replicates<double>(20, 1, bad, Exec::parallel), NumericalError);
}
