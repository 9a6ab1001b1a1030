#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace cobin {

/// Seeded pseudo-random stream. Every stochastic routine in the library takes
/// one of these explicitly; there is no global generator.
///
/// The base engine is mt19937_64 and the non-uniform variates come from
/// Boost.Random, whose algorithms are fixed across platforms, so a given
/// (seed, stream) pair yields the same draws everywhere.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x636f62u};
    engine_.seed(seq);
  }

  /// Independent child stream, e.g. one per chain or replicate.
  Rng split(std::uint64_t stream) {
    std::uint64_t s = engine_();
    return Rng(s, stream);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Exponential with unit rate.
  double exponential() { return boost::random::exponential_distribution<double>(1.0)(engine_); }

  /// Gamma(shape, scale = 1).
  double gamma(double shape) {
    return boost::random::gamma_distribution<double>(shape, 1.0)(engine_);
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  /// Inverse Gaussian with mean mu and shape lambda (Michael, Schucany & Haas).
  double inverse_gaussian(double mu, double shape) {
    double z = normal();
    double y = z * z;
    double x = mu + 0.5 * mu * mu * y / shape -
               0.5 * mu / shape * std::sqrt(4.0 * mu * shape * y + mu * mu * y * y);
    if (uniform() <= mu / (mu + x)) return x;
    return mu * mu / x;
  }

  /// Number of failures before the r-th success, success probability p.
  std::uint64_t negative_binomial(unsigned r, double p) {
    std::uint64_t failures = 0;
    const double log_q = std::log1p(-p);
    for (unsigned k = 0; k < r; ++k) {
      // geometric via inversion
      failures += static_cast<std::uint64_t>(std::floor(std::log(uniform()) / log_q));
    }
    return failures;
  }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
};

}  // namespace cobin
