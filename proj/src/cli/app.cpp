#include "cli/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cli/csv.hpp"
#include "cobin/dist.hpp"
#include "cobin/error.hpp"
#include "cobin/experiments.hpp"
#include "cobin/generators.hpp"
#include "cobin/gibbs.hpp"
#include "cobin/glm.hpp"
#include "cobin/kernels.hpp"
#include "cobin/kg.hpp"
#include "cobin/metrics.hpp"
#include "cobin/mixed.hpp"

namespace cobin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kCommands{"fit", "simulate", "rng-test", "predict", "diagnose"};
const std::set<std::string> kReserved{"y", "s1", "s2", "group", "mu_true", "u_true"};

std::string abs_path(const std::string& p) {
  if (p.empty()) return p;
  return fs::absolute(fs::path(p)).lexically_normal().string();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open JSON file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

/// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ColumnSummary {
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
};

ColumnSummary summarize(const Eigen::VectorXd& x) {
  ColumnSummary s;
  s.mean = x.mean();
  s.sd = x.size() > 1 ? std::sqrt((x.array() - s.mean).square().sum() / static_cast<double>(x.size() - 1)) : 0.0;
  std::vector<double> v(x.data(), x.data() + x.size());
  s.q025 = quantile(v, 0.025);
  s.q975 = quantile(v, 0.975);
  return s;
}

// ---------------------------------------------------------------- config JSON

void check_keys(const json& j, const std::set<std::string>& known, const std::string& what,
                std::vector<std::string>& errs) {
  if (!j.is_object()) {
    errs.push_back(what + " must be a JSON object");
    return;
  }
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) errs.push_back(what + ": unknown key '" + k + "'");
}

const std::set<std::string> kPriorKeys{"beta_var", "L", "a_psi", "b_psi", "sigma_u_scale"};
const std::set<std::string> kMixedKeys{"type",        "cov",          "rho",      "rho_free",  "rho_max",
                                       "sigma2_init", "sigma2_fixed", "mh_scale", "mh_target", "group_column"};

void validate_prior_json(const json& j, std::vector<std::string>& errs) {
  check_keys(j, kPriorKeys, "prior", errs);
  if (!j.is_object()) return;
  try {
    const double bv = j.value("beta_var", 1e4);
    if (!(bv > 0.0 && std::isfinite(bv))) errs.push_back("prior: beta_var must be positive");
    const int L = j.value("L", dist::kDefaultTrunc);
    if (L < 1 || L > dist::kDefaultTrunc) {
      errs.push_back("prior: L must lie in 1.." + std::to_string(dist::kDefaultTrunc));
    }
    if (!(j.value("a_psi", 2.0) > 0.0 && j.value("b_psi", 2.0) > 0.0)) {
      errs.push_back("prior: a_psi and b_psi must be positive");
    }
    if (!(j.value("sigma_u_scale", 1.0) > 0.0)) errs.push_back("prior: sigma_u_scale must be positive");
  } catch (const json::exception& e) {
    errs.push_back(std::string("prior: ") + e.what());
  }
}

void validate_mixed_json(const json& j, std::vector<std::string>& errs) {
  check_keys(j, kMixedKeys, "mixed", errs);
  if (!j.is_object()) return;
  try {
    const std::string type = j.value("type", std::string());
    if (type != "spatial" && type != "random_intercept") {
      errs.push_back("mixed: type must be 'spatial' or 'random_intercept'");
    }
    const std::string cov = j.value("cov", std::string("dense"));
    if (cov != "dense" && cov != "sparse") errs.push_back("mixed: cov must be 'dense' or 'sparse'");
    if (!(j.value("rho", 0.1) > 0.0)) errs.push_back("mixed: rho must be positive");
    if (!(j.value("rho_max", 0.0) >= 0.0)) errs.push_back("mixed: rho_max must be nonnegative");
    if (!(j.value("sigma2_init", 1.0) > 0.0)) errs.push_back("mixed: sigma2_init must be positive");
    if (!(j.value("mh_scale", 0.5) > 0.0)) errs.push_back("mixed: mh_scale must be positive");
    const double t = j.value("mh_target", 0.4);
    if (!(t > 0.0 && t < 1.0)) errs.push_back("mixed: mh_target must lie in (0, 1)");
    (void)j.value("rho_free", false);
    (void)j.value("sigma2_fixed", false);
    (void)j.value("group_column", std::string("group"));
  } catch (const json::exception& e) {
    errs.push_back(std::string("mixed: ") + e.what());
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["out"] = c.out;
  j["seed"] = opt_json(c.seed);
  j["kg_cutoff"] = opt_json(c.kg_cutoff);
  if (c.command == "fit") {
    j["data"] = c.data;
    j["family"] = c.family;
    j["method"] = c.method;
    j["link"] = c.link;
    j["iters"] = c.iters;
    j["burnin"] = c.burnin;
    j["chains"] = c.chains;
    j["intercept"] = c.intercept;
    j["lambda"] = opt_json(c.lambda);
    j["prior"] = c.prior;
    j["mixed"] = c.mixed;
  } else if (c.command == "predict" || c.command == "diagnose") {
    j["fit_dir"] = c.fit_dir;
    if (c.command == "predict") {
      j["new_data"] = c.new_data;
      j["save_draws"] = c.save_draws;
    }
  } else if (c.command == "simulate") {
    j["table"] = c.table;
    j["replicates"] = c.replicates;
    j["ns"] = c.ns;
    j["families"] = c.families;
    j["n_train"] = c.n_train;
    j["n_test"] = c.n_test;
    j["iters"] = c.iters;
    j["burnin"] = c.burnin;
    j["timing"] = c.timing;
    j["dgp"] = c.dgp;
    j["n"] = c.n;
    j["link"] = c.link;
    j["x_sd"] = opt_json(c.x_sd);
    j["spatial_sigma2"] = opt_json(c.spatial_sigma2);
    j["spatial_rho"] = opt_json(c.spatial_rho);
    j["phi"] = opt_json(c.phi);
    j["dgp_lambda"] = opt_json(c.dgp_lambda);
    j["alpha"] = opt_json(c.alpha);
  } else if (c.command == "rng-test") {
    j["dist"] = c.dist;
    j["c"] = c.c;
    j["b"] = c.b;
    j["theta"] = c.theta;
    j["lambda"] = opt_json(c.lambda);
    j["psi"] = c.psi;
    j["draws"] = c.draws;
  }
  return j;
}

RunConfig from_json(const json& j) {
  static const std::set<std::string> known{
      "command", "out",        "seed",    "kg_cutoff", "data",   "family",         "method",      "link",
      "iters",   "burnin",     "chains",  "intercept", "lambda", "prior",          "mixed",       "fit_dir",
      "new_data", "save_draws", "table",  "replicates", "ns",    "families",       "n_train",     "n_test",
      "timing",  "dgp",        "n",       "x_sd",      "spatial_sigma2", "spatial_rho", "phi",   "dgp_lambda",
      "alpha",   "dist",       "c",       "b",         "theta",  "psi",            "draws"};
  std::vector<std::string> errs;
  check_keys(j, known, "config", errs);
  if (!errs.empty()) {
    std::string msg = "invalid recorded config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  RunConfig c;
  try {
    c.command = j.at("command").get<std::string>();
    c.out = j.value("out", std::string());
    c.seed = opt_from<std::uint64_t>(j, "seed");
    c.kg_cutoff = opt_from<double>(j, "kg_cutoff");
    c.data = j.value("data", c.data);
    c.family = j.value("family", c.family);
    c.method = j.value("method", c.method);
    c.link = j.value("link", c.link);
    c.iters = j.value("iters", c.iters);
    c.burnin = j.value("burnin", c.burnin);
    c.chains = j.value("chains", c.chains);
    c.intercept = j.value("intercept", c.intercept);
    c.lambda = opt_from<int>(j, "lambda");
    if (j.contains("prior")) c.prior = j.at("prior");
    if (j.contains("mixed")) c.mixed = j.at("mixed");
    c.fit_dir = j.value("fit_dir", c.fit_dir);
    c.new_data = j.value("new_data", c.new_data);
    c.save_draws = j.value("save_draws", c.save_draws);
    c.table = j.value("table", c.table);
    c.replicates = j.value("replicates", c.replicates);
    c.ns = j.value("ns", c.ns);
    c.families = j.value("families", c.families);
    c.n_train = j.value("n_train", c.n_train);
    c.n_test = j.value("n_test", c.n_test);
    c.timing = j.value("timing", c.timing);
    c.dgp = j.value("dgp", c.dgp);
    c.n = j.value("n", c.n);
    c.x_sd = opt_from<double>(j, "x_sd");
    c.spatial_sigma2 = opt_from<double>(j, "spatial_sigma2");
    c.spatial_rho = opt_from<double>(j, "spatial_rho");
    c.phi = opt_from<double>(j, "phi");
    c.dgp_lambda = opt_from<int>(j, "dgp_lambda");
    c.alpha = opt_from<double>(j, "alpha");
    c.dist = j.value("dist", c.dist);
    c.c = j.value("c", c.c);
    c.b = j.value("b", c.b);
    c.theta = j.value("theta", c.theta);
    c.psi = j.value("psi", c.psi);
    c.draws = j.value("draws", c.draws);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid recorded config: ") + e.what());
  }
  return c;
}

// ------------------------------------------------------------------- parsing

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig c;
  CLI::App app{"cobin/micobin regression for proportional data"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  std::uint64_t seed = 0;
  double cutoff = 0.0, x_sd = 0.0, s_sigma2 = 0.0, s_rho = 0.0, phi = 0.0, alpha = 0.0;
  int lambda = 0, dgp_lambda = 0;
  std::string prior_path, mixed_path, families_csv;
  bool no_intercept = false;
  std::vector<CLI::Option*> seed_opts, cutoff_opts;

  auto common = [&](CLI::App* s) {
    s->add_option("--out", c.out, "output directory");
    seed_opts.push_back(s->add_option("--seed", seed, "master seed"));
    cutoff_opts.push_back(s->add_option("--kg-cutoff", cutoff, "KG proposal cutoff t"));
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a cobin or micobin regression");
  common(fit);
  fit->add_option("--data", c.data, "training CSV")->required();
  fit->add_option("--family", c.family, "cobin | micobin");
  fit->add_option("--method", c.method, "gibbs | irls | em");
  fit->add_option("--link", c.link, "cobit | logit (irls only)");
  fit->add_option("--iters", c.iters, "total iterations per chain");
  fit->add_option("--burnin", c.burnin, "discarded iterations per chain");
  fit->add_option("--chains", c.chains, "independent chains");
  fit->add_flag("--no-intercept", no_intercept, "omit the intercept column");
  CLI::Option* lambda_opt = fit->add_option("--lambda", lambda, "fixed lambda for EM");
  fit->add_option("--prior", prior_path, "prior JSON");
  fit->add_option("--mixed", mixed_path, "random-effect spec JSON");

  CLI::App* sim = app.add_subcommand("simulate", "simulation tables or a synthetic dataset");
  common(sim);
  sim->add_option("--table", c.table, "1 or 2");
  sim->add_option("--replicates", c.replicates, "replicates per cell");
  sim->add_option("--ns", c.ns, "table 1 sample sizes")->delimiter(',');
  sim->add_option("--families", families_csv, "table 2 families, comma separated");
  sim->add_option("--n-train", c.n_train, "table 2 training size");
  sim->add_option("--n-test", c.n_test, "held-out size");
  sim->add_option("--iters", c.iters, "table 2 iterations");
  sim->add_option("--burnin", c.burnin, "table 2 burn-in");
  sim->add_flag("--timing", c.timing, "record wall-clock minutes (not reproducible)");
  sim->add_option("--dgp", c.dgp, "dataset mode: beta | cobin | beta-rectangular | beta-mixture");
  sim->add_option("--n", c.n, "dataset mode: training size");
  sim->add_option("--link", c.link, "dataset mode: cobit | logit");
  CLI::Option* xsd_opt = sim->add_option("--x-sd", x_sd, "covariate sd");
  CLI::Option* ss_opt = sim->add_option("--spatial-sigma2", s_sigma2, "spatial effect variance");
  CLI::Option* sr_opt = sim->add_option("--spatial-rho", s_rho, "spatial effect range");
  CLI::Option* phi_opt = sim->add_option("--phi", phi, "beta precision");
  CLI::Option* dl_opt = sim->add_option("--dgp-lambda", dgp_lambda, "cobin dgp dispersion");
  CLI::Option* alpha_opt = sim->add_option("--alpha", alpha, "beta-rectangular weight scale");

  CLI::App* rt = app.add_subcommand("rng-test", "sampler self-check");
  common(rt);
  rt->add_option("dist", c.dist, "kg | cobin | micobin")->required();
  rt->add_option("--c", c.c, "KG tilt");
  rt->add_option("--b", c.b, "KG shape");
  rt->add_option("--theta", c.theta, "natural parameter");
  CLI::Option* rt_lambda = rt->add_option("--lambda", lambda, "cobin dispersion");
  rt->add_option("--psi", c.psi, "micobin dispersion");
  rt->add_option("--n", c.draws, "number of draws");

  CLI::App* pred = app.add_subcommand("predict", "posterior predictive mean at new locations");
  common(pred);
  pred->add_option("--fit", c.fit_dir, "directory written by fit")->required();
  pred->add_option("--data", c.new_data, "CSV of new locations")->required();
  pred->add_flag("--save-draws", c.save_draws, "also write per-draw predictions");

  CLI::App* diag = app.add_subcommand("diagnose", "convergence and fit diagnostics");
  common(diag);
  diag->add_option("--fit", c.fit_dir, "directory written by fit")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e);
    throw;
  }

  for (CLI::App* s : {fit, sim, rt, pred, diag})
    if (s->parsed()) c.command = s->get_name();
  for (auto* o : seed_opts)
    if (o->count()) c.seed = seed;
  for (auto* o : cutoff_opts)
    if (o->count()) c.kg_cutoff = cutoff;
  if (lambda_opt->count() || rt_lambda->count()) c.lambda = lambda;
  if (xsd_opt->count()) c.x_sd = x_sd;
  if (ss_opt->count()) c.spatial_sigma2 = s_sigma2;
  if (sr_opt->count()) c.spatial_rho = s_rho;
  if (phi_opt->count()) c.phi = phi;
  if (dl_opt->count()) c.dgp_lambda = dgp_lambda;
  if (alpha_opt->count()) c.alpha = alpha;
  c.intercept = !no_intercept;
  if (!families_csv.empty()) {
    std::stringstream ss(families_csv);
    std::string f;
    while (std::getline(ss, f, ',')) c.families.push_back(f);
  }

  std::vector<std::string> errs;
  if (!prior_path.empty()) {
    try {
      c.prior = read_json_file(prior_path);
    } catch (const ConfigError& e) {
      errs.push_back(std::string("--prior: ") + e.what());
    }
  }
  if (!mixed_path.empty()) {
    try {
      c.mixed = read_json_file(mixed_path);
    } catch (const ConfigError& e) {
      errs.push_back(std::string("--mixed: ") + e.what());
    }
  }
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }

  if (c.command == "simulate" && c.replicates == 0) c.replicates = c.table == 2 ? 50 : 200;
  if (c.command == "simulate" && c.table == 1 && c.ns.empty()) c.ns = {100, 400, 1600};
  if (c.command == "simulate" && c.table == 2 && c.families.empty()) c.families = {"cobin", "micobin"};
  if (c.command == "simulate" && c.table == 0 && c.n_test == 50 && !sim->get_option("--n-test")->count()) {
    c.n_test = 0;
  }
  c.out = abs_path(c.out);
  c.data = abs_path(c.data);
  c.fit_dir = abs_path(c.fit_dir);
  c.new_data = abs_path(c.new_data);
  return c;
}

// ---------------------------------------------------------------- validation

void validate(const RunConfig& c) {
  std::vector<std::string> errs;
  auto need_file = [&](const std::string& path, const std::string& flag) {
    if (path.empty()) {
      errs.push_back(flag + " is required for " + c.command);
    } else if (!fs::is_regular_file(path)) {
      errs.push_back(flag + ": file '" + path + "' does not exist");
    }
  };
  if (!kCommands.count(c.command)) errs.push_back("unknown command '" + c.command + "'");
  const bool needs_seed = c.command == "fit" || c.command == "simulate" || c.command == "predict" ||
                          c.command == "rng-test";
  if (needs_seed && !c.seed) errs.push_back("--seed is required for " + c.command);
  if (c.out.empty() && c.command != "rng-test") errs.push_back("--out is required for " + c.command);
  if (c.kg_cutoff) {
    const double t = *c.kg_cutoff;
    if (!(t > kg::kCutoffLower && t < kg::kCutoffUpper)) {
      std::ostringstream m;
      m << "--kg-cutoff " << t << " is outside the admissible range (" << std::setprecision(4)
        << kg::kCutoffLower << ", " << kg::kCutoffUpper << ")";
      errs.push_back(m.str());
    }
  }
  try {
    (void)kernels::thread_count();
  } catch (const ConfigError& e) {
    errs.push_back(e.what());
  }

  if (c.command == "fit") {
    need_file(c.data, "--data");
    const bool gibbs = c.method == "gibbs";
    if (c.family == "micobin-varying" || c.family == "micobin_varying") {
      errs.push_back("--family " + c.family +
                     ": varying-dispersion micobin requires Polya-Gamma augmentation and is not supported");
    } else if (c.family != "cobin" && c.family != "micobin") {
      errs.push_back("--family must be cobin or micobin, got '" + c.family + "'");
    }
    if (c.method != "gibbs" && c.method != "irls" && c.method != "em") {
      errs.push_back("--method must be gibbs, irls or em, got '" + c.method + "'");
    }
    if (c.link != "cobit" && c.link != "logit") errs.push_back("--link must be cobit or logit");
    if (c.link == "logit" && c.method != "irls") errs.push_back("--link logit is only available with --method irls");
    if (!gibbs && c.family != "cobin") errs.push_back("--method " + c.method + " fits the cobin family only");
    if (!gibbs && !c.mixed.is_null()) errs.push_back("--mixed requires --method gibbs");
    if (c.lambda && c.method != "em") errs.push_back("--lambda applies to --method em only");
    if (c.lambda && *c.lambda < 1) errs.push_back("--lambda must be a positive integer");
    if (gibbs) {
      if (c.iters < 1) errs.push_back("--iters must be positive");
      if (c.burnin < 0 || c.burnin >= c.iters) errs.push_back("--burnin must lie in [0, iters)");
      if (c.iters - c.burnin < 10) errs.push_back("at least 10 kept draws are required (iters - burnin >= 10)");
      if (c.chains < 1) errs.push_back("--chains must be at least 1");
    }
    validate_prior_json(c.prior, errs);
    if (!c.mixed.is_null()) validate_mixed_json(c.mixed, errs);
  } else if (c.command == "predict" || c.command == "diagnose") {
    if (c.fit_dir.empty() || !fs::is_regular_file(fs::path(c.fit_dir) / "metadata.json")) {
      errs.push_back("--fit: '" + c.fit_dir + "' is not a directory written by fit");
    }
    if (c.command == "predict") need_file(c.new_data, "--data");
  } else if (c.command == "simulate") {
    if (c.table == 1 || c.table == 2) {
      if (c.replicates < 2) errs.push_back("--replicates must be at least 2");
      if (!c.dgp.empty()) errs.push_back("--dgp cannot be combined with --table");
      if (c.table == 1) {
        if (c.ns.empty()) errs.push_back("--ns is empty");
        for (int n : c.ns)
          if (n < 3) errs.push_back("--ns entries must be at least 3");
      } else {
        for (const auto& f : c.families)
          if (f != "cobin" && f != "micobin") errs.push_back("--families: unknown family '" + f + "'");
        if (c.n_train < 3 || c.n_test < 1) errs.push_back("--n-train must be >= 3 and --n-test >= 1");
        if (c.burnin < 0 || c.burnin >= c.iters || c.iters - c.burnin < 10) {
          errs.push_back("--iters/--burnin must leave at least 10 kept draws");
        }
      }
    } else if (c.table == 0) {
      if (c.dgp.empty()) {
        errs.push_back("simulate needs --table 1|2 or --dgp");
      } else {
        try {
          (void)eval::parse_dgp(c.dgp);
        } catch (const std::exception& e) {
          errs.push_back(std::string("--dgp: ") + e.what());
        }
      }
      if (c.n < 1) errs.push_back("--n must be positive");
      if (c.n_test < 0) errs.push_back("--n-test must be nonnegative");
      if (c.link != "cobit" && c.link != "logit") errs.push_back("--link must be cobit or logit");
      if (c.x_sd && !(*c.x_sd > 0.0)) errs.push_back("--x-sd must be positive");
      if (c.spatial_sigma2.has_value() != c.spatial_rho.has_value()) {
        errs.push_back("--spatial-sigma2 and --spatial-rho must be given together");
      }
      if (c.spatial_sigma2 && !(*c.spatial_sigma2 > 0.0 && *c.spatial_rho > 0.0)) {
        errs.push_back("--spatial-sigma2 and --spatial-rho must be positive");
      }
    } else {
      errs.push_back("--table must be 1 or 2");
    }
  } else if (c.command == "rng-test") {
    if (c.dist != "kg" && c.dist != "cobin" && c.dist != "micobin") {
      errs.push_back("rng-test: distribution must be kg, cobin or micobin");
    }
    if (c.draws < 2) errs.push_back("--n must be at least 2");
    if (c.b < 1) errs.push_back("--b must be a positive integer");
    if (!std::isfinite(c.c) || !std::isfinite(c.theta)) errs.push_back("--c and --theta must be finite");
    if (c.dist == "cobin" && (!c.lambda || *c.lambda < 1)) errs.push_back("--lambda (positive integer) is required for cobin");
    if (c.dist == "micobin" && !(c.psi > 0.0 && c.psi < 1.0)) errs.push_back("--psi must lie in (0, 1)");
  }

  if (c.inputs.is_object()) {
    for (const auto& [path, digest] : c.inputs.items()) {
      if (!fs::is_regular_file(path)) {
        errs.push_back("recorded input '" + path + "' no longer exists");
      } else if (file_digest(path) != digest.get<std::string>()) {
        errs.push_back("recorded input '" + path + "' changed since the recorded run");
      }
    }
  }

  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

// ------------------------------------------------------------ data ingestion

namespace {

struct FitData {
  glm::RegressionModel m;
  std::vector<std::string> names;  // beta names
  Table table;
  Eigen::MatrixXd coords;          // empty without s1, s2
  std::vector<int> groups;         // indices into group_labels
  std::vector<double> group_labels;
};

bool has_coords(const Table& t) { return t.find("s1") >= 0 && t.find("s2") >= 0; }

Eigen::MatrixXd coords_of(const Table& t) {
  Eigen::MatrixXd s(t.rows(), 2);
  s.col(0) = t.column("s1");
  s.col(1) = t.column("s2");
  return s;
}

/// Design matrix with the given beta names ("intercept" is the constant column).
Eigen::MatrixXd design(const Table& t, const std::vector<std::string>& names, const std::string& path) {
  Eigen::MatrixXd X(t.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == "intercept" && t.find("intercept") < 0) {
      X.col(static_cast<Eigen::Index>(j)).setOnes();
    } else if (t.find(names[j]) < 0) {
      throw ConfigError("'" + path + "' lacks covariate column '" + names[j] + "'");
    } else {
      X.col(static_cast<Eigen::Index>(j)) = t.column(names[j]);
    }
  }
  return X;
}

FitData load_fit_data(const RunConfig& c) {
  FitData d;
  d.table = read_csv(c.data);
  if (d.table.find("y") < 0) throw ConfigError("'" + c.data + "' has no response column 'y'");
  if (c.intercept) d.names.push_back("intercept");
  for (const auto& nm : d.table.names)
    if (!kReserved.count(nm) && nm != "intercept") d.names.push_back(nm);
  if (d.names.empty()) throw ConfigError("no covariates: add columns or drop --no-intercept");
  d.m.X = design(d.table, d.names, c.data);
  d.m.y = d.table.column("y");
  d.m.link = glm::parse_link(c.link);
  if (has_coords(d.table)) d.coords = coords_of(d.table);
  return d;
}

gibbs::PriorSpec make_prior(const json& j, Eigen::Index p) {
  gibbs::PriorSpec prior =
      gibbs::PriorSpec::defaults(p, j.value("beta_var", 1e4), j.value("L", dist::kDefaultTrunc));
  prior.a_psi = j.value("a_psi", prior.a_psi);
  prior.b_psi = j.value("b_psi", prior.b_psi);
  prior.sigma_u_scale = j.value("sigma_u_scale", prior.sigma_u_scale);
  return prior;
}

mixed::MixedModelSpec make_mixed(const json& j, FitData& d) {
  const std::string type = j.value("type", std::string());
  mixed::MixedModelSpec s;
  if (type == "spatial") {
    if (d.coords.size() == 0) throw ConfigError("spatial model needs coordinate columns s1, s2");
    const mixed::CovModel cov =
        j.value("cov", std::string("dense")) == "sparse" ? mixed::CovModel::sparse_precision : mixed::CovModel::dense_kernel;
    s = mixed::MixedModelSpec::spatial(d.coords, j.value("rho", 0.1), cov);
  } else {
    const std::string col = j.value("group_column", std::string("group"));
    const Eigen::VectorXd g = d.table.column(col);
    std::set<double> labels;
    for (double v : g) {
      if (v != std::round(v)) throw ConfigError("group column '" + col + "' must hold integers");
      labels.insert(v);
    }
    d.group_labels.assign(labels.begin(), labels.end());
    for (double v : g) {
      d.groups.push_back(static_cast<int>(std::lower_bound(d.group_labels.begin(), d.group_labels.end(), v) -
                                          d.group_labels.begin()));
    }
    s = mixed::MixedModelSpec::random_intercept(d.groups, static_cast<int>(d.group_labels.size()));
  }
  s.rho = j.value("rho", 0.1);
  s.rho_free = j.value("rho_free", false);
  s.rho_max = j.value("rho_max", 0.0);
  s.sigma2_init = j.value("sigma2_init", 1.0);
  s.sigma2_fixed = j.value("sigma2_fixed", false);
  s.mh_scale = j.value("mh_scale", 0.5);
  s.mh_target = j.value("mh_target", 0.4);
  return s;
}

kg::EnvelopeConfig envelope(const RunConfig& c) {
  kg::EnvelopeConfig e;
  if (c.kg_cutoff) e.t = *c.kg_cutoff;
  return e;
}

void record_input(RunConfig& c, const std::string& path) { c.inputs[path] = file_digest(path); }

void write_metadata(const RunConfig& c, const std::vector<std::string>& outputs) {
  json j;
  j["schema"] = kSchema;
  j["library"] = "cobin";
  j["version"] = kVersion;
  j["command"] = c.command;
  j["config"] = to_json(c);
  j["inputs"] = c.inputs;
  j["outputs"] = outputs;
  write_json_file((fs::path(c.out) / "metadata.json").string(), j);
}

std::string out_file(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

// --------------------------------------------------------------------- fit

std::string dispersion_name(gibbs::Family f) { return f == gibbs::Family::cobin ? "lambda" : "psi"; }

/// Draws of all scalar parameters, columns named.
std::pair<Eigen::MatrixXd, std::vector<std::string>> scalar_draws(const gibbs::PosteriorDraws& d,
                                                                  const std::vector<std::string>& beta_names) {
  std::vector<std::string> names;
  for (const auto& b : beta_names) names.push_back("beta_" + b);
  names.push_back(dispersion_name(d.family));
  for (const auto& v : d.vartheta_names) names.push_back(v);
  Eigen::MatrixXd m(d.size(), static_cast<Eigen::Index>(names.size()));
  m.leftCols(d.beta.cols()) = d.beta;
  m.col(d.beta.cols()) = d.dispersion;
  if (d.vartheta.cols() > 0) m.rightCols(d.vartheta.cols()) = d.vartheta;
  return {m, names};
}

gibbs::PosteriorDraws pool(const std::vector<gibbs::PosteriorDraws>& chains) {
  gibbs::PosteriorDraws p = chains.front();
  Eigen::Index M = 0;
  for (const auto& c : chains) M += c.size();
  p.beta.resize(M, chains[0].beta.cols());
  p.dispersion.resize(M);
  p.u.resize(chains[0].u.size() ? M : 0, chains[0].u.cols());
  p.vartheta.resize(chains[0].vartheta.size() ? M : 0, chains[0].vartheta.cols());
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    p.beta.middleRows(r, c.size()) = c.beta;
    p.dispersion.segment(r, c.size()) = c.dispersion;
    if (p.u.size()) p.u.middleRows(r, c.size()) = c.u;
    if (p.vartheta.size()) p.vartheta.middleRows(r, c.size()) = c.vartheta;
    r += c.size();
  }
  return p;
}

/// M x n linear predictor draws on the training data.
Eigen::MatrixXd training_eta(const gibbs::PosteriorDraws& d, const glm::RegressionModel& m,
                             const std::optional<mixed::MixedModelSpec>& spec) {
  Eigen::MatrixXd eta = d.beta * m.X.transpose();
  if (spec && d.u.size()) eta += (spec->Z * d.u.transpose()).transpose();
  return eta;
}

json diagnostics_json(const std::vector<gibbs::PosteriorDraws>& chains, const std::vector<std::string>& beta_names,
                      const FitData& data, const std::optional<mixed::MixedModelSpec>& spec,
                      Eigen::VectorXd* theta_hat, Eigen::VectorXd* residuals, bool with_acceptance) {
  json j;
  std::vector<Eigen::MatrixXd> mats;
  std::vector<std::string> names;
  for (const auto& c : chains) {
    auto [m, nm] = scalar_draws(c, beta_names);
    mats.push_back(std::move(m));
    names = nm;
  }
  const gibbs::PosteriorDraws all = pool(chains);
  const Eigen::MatrixXd pooled = scalar_draws(all, beta_names).first;
  const Eigen::VectorXd rhat = eval::split_rhat(mats);
  json params = json::array();
  double max_rhat = 0.0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const ColumnSummary s = summarize(pooled.col(static_cast<Eigen::Index>(k)));
    const double r = rhat[static_cast<Eigen::Index>(k)];
    if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);
    params.push_back({{"name", names[k]}, {"mean", s.mean}, {"sd", s.sd}, {"q025", s.q025}, {"q975", s.q975},
                      {"rhat", std::isfinite(r) ? json(r) : json(nullptr)}});
  }
  j["parameters"] = params;
  j["max_rhat"] = max_rhat;
  json ess = json::array();
  double ess_total = 0.0;
  for (const auto& c : chains) {
    const double e = eval::multivariate_ess(c.beta);
    ess.push_back(e);
    ess_total += e;
  }
  j["mess_beta"] = {{"per_chain", ess}, {"total", ess_total}};
  json acc = json::array();
  for (const auto& c : chains) acc.push_back(c.mh_acceptance);
  if (spec && with_acceptance) j["mh_acceptance"] = acc;

  const Eigen::MatrixXd eta = training_eta(all, data.m, spec);
  const eval::Waic w = eval::waic(eval::pointwise_log_density(data.m.y, eta, all.dispersion, all.family));
  j["waic"] = {{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}};

  // quantile residuals at the posterior mean of eta and a point dispersion
  const Eigen::VectorXd th = eta.colwise().mean().transpose();
  double disp;
  if (all.family == gibbs::Family::cobin) {
    std::map<int, int> counts;
    for (double l : all.dispersion) ++counts[static_cast<int>(l)];
    disp = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  } else {
    disp = all.dispersion.mean();
  }
  const Eigen::VectorXd r = eval::quantile_residuals(data.m.y, th, all.family, disp);
  j["residuals"] = {{"dispersion", disp},
                    {"mean", r.mean()},
                    {"sd", std::sqrt((r.array() - r.mean()).square().sum() / std::max<double>(1.0, r.size() - 1.0))},
                    {"min", r.minCoeff()},
                    {"max", r.maxCoeff()},
                    {"count_abs_gt_3", (r.array().abs() > 3.0).count()}};
  if (theta_hat) *theta_hat = th;
  if (residuals) *residuals = r;
  return j;
}

void write_draws(const RunConfig& c, const std::vector<gibbs::PosteriorDraws>& chains,
                 const std::vector<std::string>& beta_names, std::vector<std::string>& outputs) {
  Table t;
  Eigen::Index M = 0;
  for (const auto& ch : chains) M += ch.size();
  Eigen::VectorXd chain(M), draw(M);
  Eigen::Index r = 0;
  for (const auto& ch : chains) {
    for (Eigen::Index k = 0; k < ch.size(); ++k, ++r) {
      chain[r] = ch.chain;
      draw[r] = static_cast<double>(k);
    }
  }
  t.add("chain", chain);
  t.add("draw", draw);
  const gibbs::PosteriorDraws all = pool(chains);
  const auto [m, names] = scalar_draws(all, beta_names);
  for (std::size_t k = 0; k < names.size(); ++k) t.add(names[k], m.col(static_cast<Eigen::Index>(k)));
  write_csv(out_file(c, "draws.csv"), t);
  outputs.push_back("draws.csv");
  if (all.u.size()) {
    Table tu;
    tu.add("chain", chain);
    tu.add("draw", draw);
    for (Eigen::Index k = 0; k < all.u.cols(); ++k) tu.add("u_" + std::to_string(k + 1), all.u.col(k));
    write_csv(out_file(c, "u_draws.csv"), tu);
    outputs.push_back("u_draws.csv");
  }
}

void run_fit(RunConfig& c) {
  record_input(c, c.data);
  FitData d = load_fit_data(c);
  std::vector<std::string> outputs;
  if (c.method != "gibbs") {
    glm::RegressionModel m = d.m;
    const double bv = c.prior.value("beta_var", 0.0);
    if (c.prior.contains("beta_var")) m.prior_cov = Eigen::MatrixXd::Identity(m.X.cols(), m.X.cols()) * bv;
    json j;
    j["schema"] = kSchema;
    j["method"] = c.method;
    j["link"] = c.link;
    glm::FitResult f;
    std::vector<double> profile;
    if (c.method == "irls") {
      const glm::ProfiledFit pf = glm::fit_with_profile(m, c.prior.value("L", dist::kDefaultTrunc));
      f = pf.fit;
      profile = pf.profile.objective;
    } else {
      int lam;
      if (c.lambda) {
        lam = *c.lambda;
      } else {
        const glm::ProfiledFit pf = glm::fit_with_profile(m, c.prior.value("L", dist::kDefaultTrunc));
        lam = *pf.fit.lambda;
        profile = pf.profile.objective;
      }
      f = glm::em_map(m, lam, {});
      f.lambda = lam;
    }
    j["beta_names"] = d.names;
    j["beta"] = std::vector<double>(f.beta.data(), f.beta.data() + f.beta.size());
    j["lambda"] = opt_json(f.lambda);
    j["loglik"] = f.loglik;
    j["iterations"] = f.iterations;
    j["converged"] = f.converged;
    j["grad_norm"] = f.grad_norm;
    j["lambda_profile"] = profile;
    if (!f.converged) throw NumericalError(c.method + ": no finite maximum found after " + std::to_string(f.iterations) +
                                       " iterations (diverging coefficients mean the MLE does not exist)");
    write_json_file(out_file(c, "fit.json"), j);
    outputs.push_back("fit.json");
    write_metadata(c, outputs);
    return;
  }

  const gibbs::Family family = gibbs::parse_family(c.family);
  const gibbs::PriorSpec prior = make_prior(c.prior, d.m.X.cols());
  std::optional<mixed::MixedModelSpec> spec;
  if (!c.mixed.is_null()) {
    spec = make_mixed(c.mixed, d);
    spec->validate(d.m.X.rows());
  }
  const std::function<gibbs::PosteriorDraws(int, Rng&)> fn = [&](int chain, Rng&) {
    gibbs::SamplerOptions opt;
    opt.iters = c.iters;
    opt.burnin = c.burnin;
    opt.seed = *c.seed;
    opt.chain = chain;
    opt.kg = envelope(c);
    if (spec) return mixed::gibbs_mixed(d.m, prior, *spec, family, opt);
    return family == gibbs::Family::cobin ? gibbs::gibbs_cobin(d.m, prior, opt) : gibbs::gibbs_micobin(d.m, prior, opt);
  };
  const std::vector<gibbs::PosteriorDraws> chains = kernels::map_replicates<gibbs::PosteriorDraws>(
      c.chains, *c.seed, fn, c.chains > 1 ? kernels::Exec::parallel : kernels::Exec::serial);
  write_draws(c, chains, d.names, outputs);
  json s = diagnostics_json(chains, d.names, d, spec, nullptr, nullptr, true);
  s["schema"] = kSchema;
  s["family"] = c.family;
  s["chains"] = c.chains;
  s["draws_per_chain"] = c.iters - c.burnin;
  write_json_file(out_file(c, "summary.json"), s);
  outputs.push_back("summary.json");
  write_metadata(c, outputs);
}

// ------------------------------------------------------- loading a fit back

struct LoadedFit {
  RunConfig cfg;
  FitData data;
  std::optional<mixed::MixedModelSpec> spec;
  std::vector<gibbs::PosteriorDraws> chains;
  json point;  // fit.json for irls / em
};

LoadedFit load_fit(RunConfig& c) {
  const std::string meta_path = (fs::path(c.fit_dir) / "metadata.json").string();
  const json meta = read_json_file(meta_path);
  if (meta.value("schema", 0) != kSchema) throw ConfigError("'" + meta_path + "': unsupported schema");
  LoadedFit f;
  f.cfg = from_json(meta.at("config"));
  if (f.cfg.command != "fit") throw ConfigError("'" + c.fit_dir + "' was not written by fit");
  f.cfg.inputs = meta.value("inputs", json::object());
  validate(f.cfg);  // checks the training data is unchanged
  record_input(c, meta_path);
  record_input(c, f.cfg.data);
  f.data = load_fit_data(f.cfg);
  if (f.cfg.method != "gibbs") {
    const std::string p = (fs::path(c.fit_dir) / "fit.json").string();
    record_input(c, p);
    f.point = read_json_file(p);
    return f;
  }
  if (!f.cfg.mixed.is_null()) f.spec = make_mixed(f.cfg.mixed, f.data);
  const std::string dp = (fs::path(c.fit_dir) / "draws.csv").string();
  record_input(c, dp);
  const Table t = read_csv(dp);
  const gibbs::Family family = gibbs::parse_family(f.cfg.family);
  const Eigen::VectorXd chain = t.column("chain");
  Table tu;
  if (f.spec) {
    const std::string up = (fs::path(c.fit_dir) / "u_draws.csv").string();
    record_input(c, up);
    tu = read_csv(up);
    if (tu.rows() != t.rows() || static_cast<Eigen::Index>(tu.names.size()) - 2 != f.spec->q()) {
      throw ConfigError("'" + up + "' does not match the fitted model");
    }
  }
  const auto p = static_cast<Eigen::Index>(f.data.names.size());
  Eigen::Index start = 0;
  while (start < t.rows()) {
    Eigen::Index end = start;
    while (end < t.rows() && chain[end] == chain[start]) ++end;
    gibbs::PosteriorDraws d;
    d.family = family;
    d.chain = static_cast<int>(chain[start]);
    d.seed = *f.cfg.seed;
    const Eigen::Index M = end - start;
    d.beta.resize(M, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      d.beta.col(k) = t.column("beta_" + f.data.names[static_cast<std::size_t>(k)]).segment(start, M);
    }
    d.dispersion = t.column(dispersion_name(family)).segment(start, M);
    if (f.spec) {
      d.vartheta_names = {"sigma2", "rho"};
      d.vartheta.resize(M, 2);
      d.vartheta.col(0) = t.column("sigma2").segment(start, M);
      d.vartheta.col(1) = t.column("rho").segment(start, M);
      d.u.resize(M, f.spec->q());
      for (Eigen::Index k = 0; k < f.spec->q(); ++k) {
        d.u.col(k) = Eigen::Map<const Eigen::VectorXd>(tu.columns[static_cast<std::size_t>(k + 2)].data(), tu.rows())
                         .segment(start, M);
      }
    }
    f.chains.push_back(std::move(d));
    start = end;
  }
  if (f.chains.empty()) throw ConfigError("'" + dp + "' holds no draws");
  return f;
}

// ------------------------------------------------------------------ predict

void run_predict(RunConfig& c) {
  LoadedFit f = load_fit(c);
  if (f.cfg.method != "gibbs") throw ConfigError("predict needs a fit made with --method gibbs");
  record_input(c, c.new_data);
  const Table nt = read_csv(c.new_data);
  const Eigen::MatrixXd X_new = design(nt, f.data.names, c.new_data);
  const gibbs::PosteriorDraws all = pool(f.chains);
  Rng rng(*c.seed, 0);
  Eigen::MatrixXd eta;
  const std::string type = f.spec ? f.cfg.mixed.value("type", std::string()) : std::string();
  if (type == "spatial") {
    if (!has_coords(nt)) throw ConfigError("'" + c.new_data + "' needs coordinate columns s1, s2");
    eta = mixed::predict_at(all, *f.spec, X_new, coords_of(nt), rng).eta;
  } else {
    eta = all.beta * X_new.transpose();
    if (type == "random_intercept") {
      const std::string col = f.cfg.mixed.value("group_column", std::string("group"));
      const Eigen::VectorXd g = nt.column(col);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const auto it = std::lower_bound(f.data.group_labels.begin(), f.data.group_labels.end(), g[i]);
        if (it != f.data.group_labels.end() && *it == g[i]) {
          eta.col(i) += all.u.col(it - f.data.group_labels.begin());
        } else {
          for (Eigen::Index m = 0; m < eta.rows(); ++m) eta(m, i) += std::sqrt(all.vartheta(m, 0)) * rng.normal();
        }
      }
    }
  }
  const Eigen::MatrixXd mu = eta.unaryExpr([](double e) { return dist::cobit_inverse(e); });
  Table out;
  if (has_coords(nt)) {
    out.add("s1", nt.column("s1"));
    out.add("s2", nt.column("s2"));
  }
  Eigen::VectorXd mean(mu.cols()), sd(mu.cols()), lo(mu.cols()), hi(mu.cols());
  for (Eigen::Index i = 0; i < mu.cols(); ++i) {
    const ColumnSummary s = summarize(mu.col(i));
    mean[i] = s.mean;
    sd[i] = s.sd;
    lo[i] = s.q025;
    hi[i] = s.q975;
  }
  out.add("mean", mean);
  out.add("sd", sd);
  out.add("q025", lo);
  out.add("q975", hi);
  std::vector<std::string> outputs;
  write_csv(out_file(c, "predictions.csv"), out);
  outputs.push_back("predictions.csv");
  if (c.save_draws) {
    Table td;
    for (Eigen::Index i = 0; i < mu.cols(); ++i) td.add("mu_" + std::to_string(i + 1), mu.col(i));
    write_csv(out_file(c, "prediction_draws.csv"), td);
    outputs.push_back("prediction_draws.csv");
  }
  write_metadata(c, outputs);
}

// ----------------------------------------------------------------- diagnose

void run_diagnose(RunConfig& c) {
  LoadedFit f = load_fit(c);
  std::vector<std::string> outputs;
  json j;
  Eigen::VectorXd theta, r;
  if (f.cfg.method == "gibbs") {
    j = diagnostics_json(f.chains, f.data.names, f.data, f.spec, &theta, &r, false);
  } else {
    const std::vector<double> b = f.point.at("beta").get<std::vector<double>>();
    const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    const glm::Link link = glm::parse_link(f.cfg.link);
    const Eigen::VectorXd eta = f.data.m.X * beta;
    theta = eta.unaryExpr([&](double e) { return glm::theta_of_eta(e, link); });
    const int lam = f.point.at("lambda").get<int>();
    r = eval::quantile_residuals(f.data.m.y, theta, gibbs::Family::cobin, lam);
    j["loglik"] = f.point.at("loglik");
    j["residuals"] = {{"dispersion", lam},
                      {"mean", r.mean()},
                      {"sd", std::sqrt((r.array() - r.mean()).square().sum() / std::max<double>(1.0, r.size() - 1.0))},
                      {"min", r.minCoeff()},
                      {"max", r.maxCoeff()},
                      {"count_abs_gt_3", (r.array().abs() > 3.0).count()}};
  }
  j["schema"] = kSchema;
  j["method"] = f.cfg.method;
  j["family"] = f.cfg.family;
  Table t;
  t.add("y", f.data.m.y);
  t.add("theta", theta);
  t.add("residual", r);
  write_csv(out_file(c, "residuals.csv"), t);
  outputs.push_back("residuals.csv");
  write_json_file(out_file(c, "diagnostics.json"), j);
  outputs.push_back("diagnostics.json");
  write_metadata(c, outputs);
}

// ----------------------------------------------------------------- simulate

std::string fmt(double x) { return format_double(x); }

void run_simulate(RunConfig& c) {
  std::vector<std::string> outputs;
  if (c.table == 1) {
    eval::Table1Config t;
    t.replicates = c.replicates;
    t.ns = c.ns;
    t.seed = *c.seed;
    t.exec = kernels::Exec::parallel;
    const auto cells = eval::run_table1(t);
    std::vector<std::vector<std::string>> rows;
    for (const auto& cell : cells) {
      const std::string name = "table1_" + glm::link_name(cell.link) + "_" + eval::dgp_name(cell.dgp) + "_n" +
                               std::to_string(cell.n) + ".csv";
      Table tc;
      tc.add("beta1", Eigen::Map<const Eigen::VectorXd>(cell.estimates.data(),
                                                       static_cast<Eigen::Index>(cell.estimates.size())));
      write_csv(out_file(c, name), tc);
      outputs.push_back(name);
      rows.push_back({glm::link_name(cell.link), eval::dgp_name(cell.dgp), std::to_string(cell.n),
                      std::to_string(cell.ok), std::to_string(cell.failed), fmt(cell.bias.value), fmt(cell.bias.se),
                      fmt(cell.rmse.value), fmt(cell.rmse.se)});
    }
    write_text_csv(out_file(c, "summary.csv"),
                   {"link", "dgp", "n", "ok", "failed", "bias", "bias_se", "rmse", "rmse_se"}, rows);
    outputs.push_back("summary.csv");
  } else if (c.table == 2) {
    eval::Table2Config t;
    t.replicates = c.replicates;
    t.n_train = c.n_train;
    t.n_test = c.n_test;
    t.iters = c.iters;
    t.burnin = c.burnin;
    t.families.clear();
    for (const auto& f : c.families) t.families.push_back(gibbs::parse_family(f));
    t.kg = envelope(c);
    t.seed = *c.seed;
    t.exec = kernels::Exec::parallel;
    const auto rows2 = eval::run_table2(t);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"family", "ok", "failed", "bias", "bias_se", "rmse", "rmse_se",
                                    "neg_test_ll", "neg_test_ll_se", "mspe", "mspe_se", "mess", "mess_se"};
    if (c.timing) header.insert(header.end(), {"minutes", "minutes_se"});
    for (const auto& row : rows2) {
      const std::string fam = gibbs::family_name(row.family);
      Table tc;
      const auto R = static_cast<Eigen::Index>(row.replicates.size());
      Eigen::VectorXd idx(R), ok(R), b(R), nll(R), ms(R), ess(R), acc(R), mins(R);
      for (Eigen::Index r = 0; r < R; ++r) {
        const auto& rep = row.replicates[static_cast<std::size_t>(r)];
        const double nan = std::nan("");
        idx[r] = static_cast<double>(r);
        ok[r] = rep.ok ? 1.0 : 0.0;
        b[r] = rep.ok ? rep.beta1 : nan;
        nll[r] = rep.ok ? rep.neg_test_ll : nan;
        ms[r] = rep.ok ? rep.mspe : nan;
        ess[r] = rep.ok ? rep.mess : nan;
        acc[r] = rep.ok ? rep.mh_acceptance : nan;
        mins[r] = rep.minutes;
      }
      tc.add("replicate", idx);
      tc.add("ok", ok);
      tc.add("beta1", b);
      tc.add("neg_test_ll", nll);
      tc.add("mspe", ms);
      tc.add("mess", ess);
      tc.add("mh_acceptance", acc);
      if (c.timing) tc.add("minutes", mins);
      write_csv(out_file(c, "table2_" + fam + ".csv"), tc);
      outputs.push_back("table2_" + fam + ".csv");
      std::vector<std::string> line{fam,
                                    std::to_string(row.ok),
                                    std::to_string(row.failed),
                                    fmt(row.bias.value),
                                    fmt(row.bias.se),
                                    fmt(row.rmse.value),
                                    fmt(row.rmse.se),
                                    fmt(row.neg_test_ll.value),
                                    fmt(row.neg_test_ll.se),
                                    fmt(row.mspe.value),
                                    fmt(row.mspe.se),
                                    fmt(row.mess.value),
                                    fmt(row.mess.se)};
      if (c.timing) line.insert(line.end(), {fmt(row.minutes.value), fmt(row.minutes.se)});
      rows.push_back(line);
    }
    write_text_csv(out_file(c, "summary.csv"), header, rows);
    outputs.push_back("summary.csv");
  } else {
    eval::DataGeneratorSpec s;
    s.family = eval::parse_dgp(c.dgp);
    s.link = glm::parse_link(c.link);
    s.n = c.n + c.n_test;
    s.params = eval::DgpParams::defaults(s.family);
    if (c.phi) s.params.phi = *c.phi;
    if (c.dgp_lambda) s.params.lambda = *c.dgp_lambda;
    if (c.alpha) s.params.alpha = *c.alpha;
    s.x_sd = c.x_sd ? *c.x_sd : eval::table1_x_sd(s.link);
    if (c.spatial_sigma2) s.spatial = eval::SpatialEffect{*c.spatial_sigma2, *c.spatial_rho};
    Rng rng(*c.seed, 0);
    const eval::Dataset all = eval::generate(s, rng);
    auto write_part = [&](const eval::Dataset& d, const std::string& name) {
      Table t;
      t.add("y", d.y);
      for (Eigen::Index k = 1; k < d.X.cols(); ++k) t.add("x" + std::to_string(k), d.X.col(k));
      if (d.coords.size()) {
        t.add("s1", d.coords.col(0));
        t.add("s2", d.coords.col(1));
      }
      t.add("mu_true", d.mu);
      if (d.u.size()) t.add("u_true", d.u);
      write_csv(out_file(c, name), t);
      outputs.push_back(name);
    };
    write_part(all.slice(0, c.n), "data.csv");
    if (c.n_test > 0) write_part(all.slice(c.n, c.n_test), "test.csv");
  }
  write_metadata(c, outputs);
}

// ----------------------------------------------------------------- rng-test

/// Asymptotic Kolmogorov tail probability with the small-sample correction.
double ks_pvalue(double D, double n) {
  const double sn = std::sqrt(n);
  const double l = (sn + 0.12 + 0.11 / sn) * D;
  if (l < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * l * l);
    p += term;
    if (std::fabs(term) < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

double ks_statistic(std::vector<double>& x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const auto n = static_cast<std::int64_t>(x.size());
  const double nd = static_cast<double>(n);
  double D = 0.0;
#pragma omp parallel for reduction(max : D) num_threads(kernels::thread_count())
  for (std::int64_t i = 0; i < n; ++i) {
    const double F = cdf(x[static_cast<std::size_t>(i)]);
    D = std::max(D, std::max(F - static_cast<double>(i) / nd, static_cast<double>(i + 1) / nd - F));
  }
  return D;
}

void run_rng_test(RunConfig& c) {
  const std::int64_t n = c.draws;
  const std::uint64_t seed = *c.seed;
  const std::int64_t blocks = (n + static_cast<std::int64_t>(kernels::kBlock) - 1) / static_cast<std::int64_t>(kernels::kBlock);
  std::vector<double> x(static_cast<std::size_t>(n));
  std::vector<std::int64_t> proposals(static_cast<std::size_t>(blocks), 0);
  json j;
  j["schema"] = kSchema;
  j["dist"] = c.dist;
  j["n"] = n;
  j["seed"] = seed;
  double expected_mean = 0.0, expected_var = 0.0;
  std::function<double(double)> cdf;
  const kg::EnvelopeConfig env = envelope(c);
  const kg::KG1Proposal prop = kg::make_kg1_proposal(c.c, env);
  const std::optional<int> lam = c.lambda;

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(blocks));
#pragma omp parallel for schedule(dynamic, 1) num_threads(kernels::thread_count())
  for (std::int64_t k = 0; k < blocks; ++k) {
    try {
      Rng rng(seed, static_cast<std::uint64_t>(k));
      const std::int64_t lo = k * static_cast<std::int64_t>(kernels::kBlock);
      const std::int64_t hi = std::min(n, lo + static_cast<std::int64_t>(kernels::kBlock));
      for (std::int64_t i = lo; i < hi; ++i) {
        double v = 0.0;
        if (c.dist == "kg") {
          for (int r = 0; r < c.b; ++r) {
            const kg::KGDraw d = kg::sample_kg1(prop, rng);
            v += d.value;
            proposals[static_cast<std::size_t>(k)] += d.outer_iters;
          }
        } else if (c.dist == "cobin") {
          v = dist::cobin_sample({c.theta, *lam}, rng);
        } else {
          v = dist::micobin_sample({c.theta, c.psi}, rng);
        }
        x[static_cast<std::size_t>(i)] = v;
      }
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (c.dist == "kg") {
    j["b"] = c.b;
    j["c"] = c.c;
    j["cutoff"] = env.t;
    expected_mean = kg::kg_mean({c.b, c.c});
    // Var = b sum_k 1 / d_k^2 with d_k = 2 pi^2 k^2 + c^2 / 2, plus an integral tail
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const int K = 100000;
    double s = 0.0;
    for (int k = K; k >= 1; --k) {
      const double d = 2.0 * pi2 * k * k + 0.5 * c.c * c.c;
      s += 1.0 / (d * d);
    }
    s += 1.0 / (4.0 * pi2 * pi2 * 3.0 * std::pow(K + 0.5, 3));
    expected_var = c.b * s;
    std::int64_t total = 0;
    for (auto p : proposals) total += p;
    j["acceptance_rate"] = static_cast<double>(n) * c.b / static_cast<double>(total);
    if (c.b == 1) {
      const double cc = c.c;
      cdf = [cc](double v) { return kg::kg1_cdf(v, cc); };
    }
  } else {
    const dist::CumulantTriple k = dist::cumulant(c.theta);
    expected_mean = k.bp;
    j["theta"] = c.theta;
    if (c.dist == "cobin") {
      j["lambda"] = *lam;
      expected_var = k.bpp / *lam;
      const dist::CobinParams p{c.theta, *lam};
      cdf = [p](double v) { return dist::cobin_cdf(v, p); };
    } else {
      j["psi"] = c.psi;
      double inv = 0.0;
      for (int l = 1; l <= 20000; ++l) inv += std::exp(dist::micobin_log_weight(l, c.psi)) / l;
      expected_var = k.bpp * inv;
      const dist::MicobinParams p{c.theta, c.psi};
      cdf = [p](double v) { return dist::micobin_cdf(v, p); };
    }
    j["acceptance_rate"] = nullptr;
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  j["mean"] = mean;
  j["variance"] = var;
  j["expected_mean"] = expected_mean;
  j["expected_variance"] = expected_var;
  j["z_mean"] = (mean - expected_mean) / std::sqrt(expected_var / static_cast<double>(n));
  if (cdf) {
    const double D = ks_statistic(x, cdf);
    j["ks_statistic"] = D;
    j["ks_pvalue"] = ks_pvalue(D, static_cast<double>(n));
  } else {
    j["ks_statistic"] = nullptr;
    j["ks_pvalue"] = nullptr;
  }
  std::cout << j.dump(2) << '\n';
  if (!c.out.empty()) {
    write_json_file(out_file(c, "rng_test.json"), j);
    write_metadata(c, {"rng_test.json"});
  }
}

}  // namespace

// ------------------------------------------------------------------ execute

void execute(RunConfig c) {
  c.inputs = json::object();
  if (!c.out.empty()) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.out + "': " + ec.message());
  }
  if (c.command == "fit") {
    run_fit(c);
  } else if (c.command == "predict") {
    run_predict(c);
  } else if (c.command == "diagnose") {
    run_diagnose(c);
  } else if (c.command == "simulate") {
    run_simulate(c);
  } else if (c.command == "rng-test") {
    run_rng_test(c);
  } else {
    throw ConfigError("unknown command '" + c.command + "'");
  }
}

int run_main(int argc, const char* const* argv) {
  try {
    RunConfig cfg;
    if (argc >= 2 && std::strcmp(argv[1], "--config") == 0) {
      // replay: cobin --config metadata.json [--out dir]
      if (argc != 3 && !(argc == 5 && std::strcmp(argv[3], "--out") == 0)) {
        throw ConfigError("usage: cobin --config <metadata.json> [--out <dir>]");
      }
      const json meta = read_json_file(argv[2]);
      if (meta.value("schema", 0) != kSchema) throw ConfigError(std::string("'") + argv[2] + "': unsupported schema");
      cfg = from_json(meta.at("config"));
      cfg.inputs = meta.value("inputs", json::object());
      if (argc == 5) cfg.out = abs_path(argv[4]);
    } else {
      cfg = parse_args(argc, argv);
    }
    validate(cfg);
    execute(cfg);
    return kOk;
  } catch (const CLI::Success&) {
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "cobin: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "cobin: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "cobin: invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "cobin: numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "cobin: error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace cobin::cli
