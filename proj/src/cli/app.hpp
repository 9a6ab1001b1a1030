#pragma once

// Command-line front end: argument parsing into a RunConfig, validation that
// reports every violation at once, and execution of each subcommand.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace cobin::cli {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSchema = 1;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kNumericError = 3 };

struct RunConfig {
  std::string command;  // fit, simulate, rng-test, predict, diagnose
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> kg_cutoff;

  // fit
  std::string data;
  std::string family = "cobin";
  std::string method = "gibbs";
  std::string link = "cobit";
  int iters = 6000;
  int burnin = 1000;
  int chains = 1;
  bool intercept = true;
  std::optional<int> lambda;        // fixed lambda for EM
  nlohmann::json prior = nlohmann::json::object();
  nlohmann::json mixed;              // null for fixed effects

  // predict, diagnose
  std::string fit_dir;
  std::string new_data;
  bool save_draws = false;

  // simulate
  int table = 0;
  int replicates = 0;
  std::vector<int> ns;
  std::vector<std::string> families;
  int n_train = 200;
  int n_test = 50;
  bool timing = false;
  std::string dgp;
  int n = 0;
  std::optional<double> x_sd;
  std::optional<double> spatial_sigma2;
  std::optional<double> spatial_rho;
  std::optional<double> phi;
  std::optional<int> dgp_lambda;
  std::optional<double> alpha;

  // rng-test
  std::string dist = "kg";
  double c = 0.0;
  int b = 1;
  double theta = 0.0;
  double psi = 0.5;
  int draws = 1000000;

  /// Input files recorded with their digests when the run executes.
  nlohmann::json inputs = nlohmann::json::object();
};

nlohmann::json to_json(const RunConfig& cfg);
/// Throws ConfigError listing unknown keys or bad types.
RunConfig from_json(const nlohmann::json& j);

/// Parses argv. Throws ConfigError (all violations in one message) or
/// CLI::ParseError for malformed command lines.
RunConfig parse_args(int argc, const char* const* argv);

/// Throws ConfigError listing every violation.
void validate(const RunConfig& cfg);

/// Runs a validated config and writes its artifacts under cfg.out.
void execute(RunConfig cfg);

/// Full entry point: parse, validate, execute, map errors to exit codes.
int run_main(int argc, const char* const* argv);

}  // namespace cobin::cli
