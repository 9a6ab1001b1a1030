#include "cobin/experiments.hpp"

#include <chrono>
#include <cmath>

#include "cobin/error.hpp"
#include "cobin/metrics.hpp"
#include "cobin/mixed.hpp"

namespace cobin::eval {

Estimate mean_se(const std::vector<double>& x) {
  Estimate e;
  const double n = static_cast<double>(x.size());
  if (x.empty()) return e;
  double s = 0.0;
  for (double v : x) s += v;
  e.value = s / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - e.value) * (v - e.value);
    e.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

std::pair<Estimate, Estimate> bias_rmse(const std::vector<double>& estimates, double truth) {
  std::vector<double> err, sq;
  for (double v : estimates) err.push_back(v - truth), sq.push_back((v - truth) * (v - truth));
  const Estimate bias = mean_se(err);
  const Estimate mse = mean_se(sq);
  Estimate rmse;
  rmse.value = std::sqrt(mse.value);
  rmse.se = rmse.value > 0.0 ? mse.se / (2.0 * rmse.value) : 0.0;
  return {bias, rmse};
}

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t cell) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (cell + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void Table1Config::validate() const {
  if (replicates < 2) throw ConfigError("table 1: need at least 2 replicates");
  if (ns.empty() || links.empty() || dgps.empty()) throw ConfigError("table 1: empty design");
  for (int n : ns)
    if (n < 3) throw ConfigError("table 1: n must be >= 3");
}

double table1_x_sd(glm::Link link) { return link == glm::Link::cobit ? 3.0 : 1.0; }

std::vector<Table1Cell> run_table1(const Table1Config& cfg) {
  cfg.validate();
  std::vector<Table1Cell> cells;
  std::uint64_t index = 0;
  for (glm::Link link : cfg.links) {
    for (Dgp dgp : cfg.dgps) {
      for (int n : cfg.ns) {
        DataGeneratorSpec spec;
        spec.family = dgp;
        spec.link = link;
        spec.x_sd = table1_x_sd(link);
        spec.n = n;
        spec.params = DgpParams::defaults(dgp);
        // NaN marks a failed replicate
        const std::function<double(int, Rng&)> fn = [&](int, Rng& rng) {
          try {
            const Dataset d = generate(spec, rng);
            glm::RegressionModel m;
            m.X = d.X;
            m.y = d.y;
            m.link = link;
            const glm::FitResult f = glm::irls_fit(m);
            return f.converged ? f.beta[1] : std::nan("");
          } catch (const std::exception&) {
            return std::nan("");
          }
        };
        const std::vector<double> est =
            kernels::map_replicates<double>(cfg.replicates, cell_seed(cfg.seed, index++), fn, cfg.exec);
        Table1Cell c;
        c.link = link;
        c.dgp = dgp;
        c.n = n;
        for (double e : est) {
          if (std::isnan(e)) {
            ++c.failed;
          } else {
            c.estimates.push_back(e);
          }
        }
        c.ok = static_cast<int>(c.estimates.size());
        std::tie(c.bias, c.rmse) = bias_rmse(c.estimates, 1.0);
        cells.push_back(std::move(c));
      }
    }
  }
  return cells;
}

void Table2Config::validate() const {
  if (replicates < 2) throw ConfigError("table 2: need at least 2 replicates");
  if (n_train < 3 || n_test < 1) throw ConfigError("table 2: bad train/test sizes");
  if (!(rho > 0.0 && sigma2 > 0.0 && x_sd > 0.0)) throw ConfigError("table 2: rho, sigma2, x_sd must be positive");
  if (families.empty()) throw ConfigError("table 2: no families");
  if (burnin < 0 || burnin >= iters || iters - burnin < 10) {
    throw ConfigError("table 2: need at least 10 kept iterations");
  }
  params.validate(dgp);
  kg.validate();
}

Table2Replicate table2_replicate(const Table2Config& cfg, int r, gibbs::Family family) {
  Table2Replicate rep;
  try {
    Rng data_rng(cell_seed(cfg.seed, 0), static_cast<std::uint64_t>(r));
    DataGeneratorSpec spec;
    spec.family = cfg.dgp;
    spec.link = glm::Link::cobit;
    spec.x_sd = cfg.x_sd;
    spec.n = cfg.n_train + cfg.n_test;
    spec.params = cfg.params;
    spec.spatial = SpatialEffect{cfg.sigma2, cfg.rho};
    const Dataset all = generate(spec, data_rng);
    const Dataset train = all.slice(0, cfg.n_train);
    const Dataset test = all.slice(cfg.n_train, cfg.n_test);

    glm::RegressionModel m;
    m.X = train.X;
    m.y = train.y;
    const mixed::MixedModelSpec ms = mixed::MixedModelSpec::spatial(train.coords, cfg.rho, mixed::CovModel::dense_kernel);
    gibbs::SamplerOptions opt;
    opt.iters = cfg.iters;
    opt.burnin = cfg.burnin;
    opt.kg = cfg.kg;
    const std::uint64_t fam = family == gibbs::Family::cobin ? 1 : 2;
    opt.seed = cell_seed(cfg.seed, fam * 1000003ull + static_cast<std::uint64_t>(r));
    const auto t0 = std::chrono::steady_clock::now();
    const gibbs::PosteriorDraws draws =
        mixed::gibbs_mixed(m, gibbs::PriorSpec::defaults(m.X.cols(), cfg.beta_var), ms, family, opt);
    rep.minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    Rng pred_rng(opt.seed, 1);
    const mixed::Prediction pred = mixed::predict_at(draws, ms, test.X, test.coords, pred_rng);
    rep.beta1 = draws.beta.col(1).mean();
    rep.neg_test_ll = neg_test_loglik(pointwise_log_density(test.y, pred.eta, draws.dispersion, family));
    rep.mspe = mspe(test.mu, pred.mean);
    rep.mess = multivariate_ess(draws.beta);
    rep.mh_acceptance = draws.mh_acceptance;
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

std::vector<Table2Row> run_table2(const Table2Config& cfg) {
  cfg.validate();
  std::vector<Table2Row> rows;
  for (gibbs::Family family : cfg.families) {
    const std::function<Table2Replicate(int, Rng&)> fn = [&](int r, Rng&) {
      return table2_replicate(cfg, r, family);
    };
    Table2Row row;
    row.family = family;
    row.replicates = kernels::map_replicates<Table2Replicate>(cfg.replicates, cfg.seed, fn, cfg.exec);
    std::vector<double> b, nll, ms, ess, mins;
    for (const auto& rep : row.replicates) {
      if (!rep.ok) {
        ++row.failed;
        continue;
      }
      b.push_back(rep.beta1);
      nll.push_back(rep.neg_test_ll);
      ms.push_back(rep.mspe);
      ess.push_back(rep.mess);
      mins.push_back(rep.minutes);
    }
    row.ok = static_cast<int>(b.size());
    std::tie(row.bias, row.rmse) = bias_rmse(b, 1.0);
    row.neg_test_ll = mean_se(nll);
    row.mspe = mean_se(ms);
    row.mess = mean_se(ess);
    row.minutes = mean_se(mins);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cobin::eval
