#include "grid_posterior.hpp"

#include <algorithm>
#include <cmath>

#include "cobin/dist.hpp"

namespace testutil {

GridPosterior cobin_grid_posterior(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                   double prior_var, int L, int nodes) {
  const auto n = x.size();
  // log h(y, l) = log p(y; 0, l) since B(0) = 0
  std::vector<double> H(L, 0.0);
  for (int l = 1; l <= L; ++l)
    for (Eigen::Index i = 0; i < n; ++i) H[l - 1] += cobin::dist::cobin_log_density(y[i], {0.0, l});
  const std::vector<double> lp = cobin::dist::default_lambda_log_prior(L);

  auto log_post = [&](double b) {
    double lin = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double th = b * x[i];
      lin += y[i] * th - cobin::dist::log_partition(th);
    }
    double mx = -INFINITY;
    std::vector<double> t(L);
    for (int l = 1; l <= L; ++l) {
      t[l - 1] = lp[l - 1] + H[l - 1] + l * lin;
      mx = std::max(mx, t[l - 1]);
    }
    double s = 0.0;
    for (double v : t) s += std::exp(v - mx);
    return mx + std::log(s) - 0.5 * b * b / prior_var;
  };

  // locate the mode on a coarse scan, then a wide fine grid around it
  double best = 0.0, best_v = -INFINITY;
  for (double b = -20.0; b <= 20.0; b += 0.01) {
    const double v = log_post(b);
    if (v > best_v) best_v = v, best = b;
  }
  double lo = best, hi = best;
  while (log_post(lo) > best_v - 40.0) lo -= 0.01;
  while (log_post(hi) > best_v - 40.0) hi += 0.01;

  GridPosterior g;
  g.beta.resize(nodes);
  g.density.resize(nodes);
  const double h = (hi - lo) / (nodes - 1);
  double total = 0.0;
  for (int k = 0; k < nodes; ++k) {
    g.beta[k] = lo + k * h;
    g.density[k] = std::exp(log_post(g.beta[k]) - best_v);
    total += g.density[k] * ((k == 0 || k == nodes - 1) ? 0.5 : 1.0);
  }
  total *= h;
  double m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < nodes; ++k) {
    g.density[k] /= total;
    const double w = g.density[k] * h * ((k == 0 || k == nodes - 1) ? 0.5 : 1.0);
    m1 += w * g.beta[k];
    m2 += w * g.beta[k] * g.beta[k];
  }
  g.mean = m1;
  g.sd = std::sqrt(m2 - m1 * m1);
  return g;
}

double histogram_tv(const GridPosterior& g, const std::vector<double>& draws, int bins) {
  const auto nodes = g.beta.size();
  const double h = g.beta[1] - g.beta[0];
  // grid CDF at the nodes by the trapezoid rule
  std::vector<double> cdf(nodes, 0.0);
  for (std::size_t k = 1; k < nodes; ++k) cdf[k] = cdf[k - 1] + 0.5 * h * (g.density[k - 1] + g.density[k]);
  auto quantile = [&](double p) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), p);
    return g.beta[std::min<std::size_t>(it - cdf.begin(), nodes - 1)];
  };
  auto grid_cdf = [&](double b) {
    if (b <= g.beta.front()) return 0.0;
    if (b >= g.beta.back()) return 1.0;
    const std::size_t k = static_cast<std::size_t>((b - g.beta.front()) / h);
    const double t = (b - g.beta[k]) / h;
    return cdf[k] + t * (cdf[std::min(k + 1, nodes - 1)] - cdf[k]);
  };
  const double a = quantile(0.0005), b = quantile(0.9995);
  std::vector<double> edges(bins + 1);
  for (int j = 0; j <= bins; ++j) edges[j] = a + (b - a) * j / bins;
  // bin 0 is (-inf, a), bin bins+1 is [b, inf)
  std::vector<double> emp(bins + 2, 0.0), ref(bins + 2, 0.0);
  for (double d : draws) {
    int j;
    if (d < a) j = 0;
    else if (d >= b) j = bins + 1;
    else j = 1 + std::min(bins - 1, static_cast<int>((d - a) / (b - a) * bins));
    emp[j] += 1.0 / draws.size();
  }
  ref[0] = grid_cdf(a);
  for (int j = 0; j < bins; ++j) ref[j + 1] = grid_cdf(edges[j + 1]) - grid_cdf(edges[j]);
  ref[bins + 1] = 1.0 - grid_cdf(b);
  double tv = 0.0;
  for (int j = 0; j < bins + 2; ++j) tv += std::abs(emp[j] - ref[j]);
  return 0.5 * tv;
}

double batch_means_se(const std::vector<double>& chain) {
  const std::size_t M = chain.size();
  const std::size_t b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(M))));
  const std::size_t a = M / b;
  double mean = 0.0;
  for (std::size_t i = 0; i < a * b; ++i) mean += chain[i];
  mean /= static_cast<double>(a * b);
  double s = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    double bm = 0.0;
    for (std::size_t i = 0; i < b; ++i) bm += chain[k * b + i];
    bm /= static_cast<double>(b);
    s += (bm - mean) * (bm - mean);
  }
  const double var_batch = s / static_cast<double>(a - 1);
  return std::sqrt(var_batch * static_cast<double>(b) / static_cast<double>(M));
}

}  // namespace testutil
