#pragma once

// Hot loops with serial and OpenMP variants. Both variants produce identical
// output: work is cut into fixed blocks and block k always draws from
// Rng(seed, k), whatever thread runs it.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cobin/kg.hpp"

namespace cobin::kernels {

inline constexpr std::size_t kBlock = 4096;

enum class Exec { serial, parallel };

/// Worker threads for parallel kernels: COBIN_THREADS if set (>= 1), else the
/// OpenMP default. Throws ConfigError on a malformed value.
int thread_count();

/// out[i] ~ KG(b[i], c[i]). b may hold a single entry broadcast to all i.
void kg_batch(std::span<const int> b, std::span<const double> c, std::span<double> out,
              std::uint64_t seed, const kg::EnvelopeConfig& cfg, Exec exec);

/// n x L matrix of log h(y_i, l).
Eigen::MatrixXd log_h_table(const Eigen::VectorXd& y, int L, Exec exec);

/// Column sums of log_h_table: H_l = sum_i log h(y_i, l).
Eigen::VectorXd log_h_sums(const Eigen::VectorXd& y, int L, Exec exec);

/// Profile log-likelihood over l = 1..L at fixed theta:
/// H_l + l sum_i (y_i theta_i - B(theta_i)).
Eigen::VectorXd lambda_grid_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& theta, int L,
                                   Exec exec);

/// Runs fn(r, Rng(seed, r)) for r = 0..R-1 and collects results in order.
template <typename T>
std::vector<T> map_replicates(int R, std::uint64_t seed, const std::function<T(int, Rng&)>& fn,
                              Exec exec) {
  std::vector<T> out(R);
  if (exec == Exec::serial) {
    for (int r = 0; r < R; ++r) {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      out[r] = fn(r, rng);
    }
    return out;
  }
  std::vector<std::exception_ptr> errors(R);
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int r = 0; r < R; ++r) {
    try {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      out[r] = fn(r, rng);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace cobin::kernels
