#include "cobin/kernels.hpp"

#include <cstdlib>
#include <exception>
#include <string>

#include <omp.h>

#include "cobin/dist.hpp"
#include "cobin/error.hpp"

namespace cobin::kernels {

int thread_count() {
  if (const char* env = std::getenv("COBIN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096) {
      throw ConfigError(std::string("COBIN_THREADS must be a positive integer, got '") + env + "'");
    }
    return static_cast<int>(v);
  }
  return omp_get_max_threads();
}

namespace {

void kg_block(std::span<const int> b, std::span<const double> c, std::span<double> out,
              std::size_t block, std::uint64_t seed, const kg::EnvelopeConfig& cfg) {
  Rng rng(seed, block);
  const std::size_t lo = block * kBlock;
  const std::size_t hi = std::min(out.size(), lo + kBlock);
  for (std::size_t i = lo; i < hi; ++i) {
    const int bi = b.size() == 1 ? b[0] : b[i];
    out[i] = kg::sample_kg({bi, c[i]}, cfg, rng);
  }
}

template <typename F>
void run_blocks(std::size_t nblocks, Exec exec, F&& f) {
  if (exec == Exec::serial || nblocks < 2) {
    for (std::size_t k = 0; k < nblocks; ++k) f(k);
    return;
  }
  std::vector<std::exception_ptr> errors(nblocks);
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t k = 0; k < nblocks; ++k) {
    try {
      f(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void kg_batch(std::span<const int> b, std::span<const double> c, std::span<double> out,
              std::uint64_t seed, const kg::EnvelopeConfig& cfg, Exec exec) {
  if (c.size() != out.size() || (b.size() != 1 && b.size() != out.size())) {
    throw DomainError("kg_batch: size mismatch");
  }
  cfg.validate();
  const std::size_t nblocks = (out.size() + kBlock - 1) / kBlock;
  run_blocks(nblocks, exec, [&](std::size_t k) { kg_block(b, c, out, k, seed, cfg); });
}

Eigen::MatrixXd log_h_table(const Eigen::VectorXd& y, int L, Exec exec) {
  if (L < 1) throw DomainError("log_h_table: L must be >= 1");
  const auto n = static_cast<std::size_t>(y.size());
  Eigen::MatrixXd t(y.size(), L);
  // no randomness here, so any row blocking gives the same table
  const std::size_t rows_per = 64;
  const std::size_t nrow_blocks = (n + rows_per - 1) / rows_per;
  run_blocks(nrow_blocks, exec, [&](std::size_t k) {
    const std::size_t hi = std::min(n, (k + 1) * rows_per);
    for (std::size_t i = k * rows_per; i < hi; ++i) {
      const std::vector<double> row = dist::irwin_hall_log_table(y[i], L);
      for (int l = 0; l < L; ++l) t(i, l) = row[l];
    }
  });
  return t;
}

Eigen::VectorXd log_h_sums(const Eigen::VectorXd& y, int L, Exec exec) {
  const Eigen::MatrixXd t = log_h_table(y, L, exec);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(L);
  // fixed summation order, independent of the execution mode
  for (Eigen::Index i = 0; i < t.rows(); ++i) s += t.row(i).transpose();
  return s;
}

Eigen::VectorXd lambda_grid_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& theta, int L,
                                   Exec exec) {
  if (y.size() != theta.size()) throw DomainError("lambda_grid_loglik: size mismatch");
  const Eigen::VectorXd h = log_h_sums(y, L, exec);
  double lin = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) lin += y[i] * theta[i] - dist::log_partition(theta[i]);
  Eigen::VectorXd out(L);
  for (int l = 1; l <= L; ++l) out[l - 1] = h[l - 1] + l * lin;
  return out;
}

}  // namespace cobin::kernels
