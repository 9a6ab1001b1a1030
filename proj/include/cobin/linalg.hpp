#pragma once

// Gaussian sampling in canonical (precision) form and covariance kernels.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cobin/rng.hpp"

namespace cobin::linalg {

using SpMat = Eigen::SparseMatrix<double>;

/// Vector of iid standard normals.
Eigen::VectorXd standard_normals(Eigen::Index n, Rng& rng);

/// Dense Cholesky that throws NumericalError with `what` on failure.
Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& Q, const char* what);

/// log det from a Cholesky factor.
double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt);

/// Draw from N(Q^{-1} b, Q^{-1}) given the Cholesky factor of Q.
Eigen::VectorXd sample_canonical(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& b,
                                 Rng& rng);

/// Sparse Cholesky of a symmetric positive definite matrix.
class SparseChol {
 public:
  /// natural_order keeps the input ordering (no fill-reducing permutation).
  explicit SparseChol(bool natural_order = false) : natural_(natural_order) {}
  void compute(const SpMat& Q, const char* what);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  double log_det() const;
  /// Draw from N(Q^{-1} b, Q^{-1}).
  Eigen::VectorXd sample(const Eigen::VectorXd& b, Rng& rng) const;

 private:
  bool natural_;
  Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> amd_;
  Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>> nat_;
};

/// Euclidean distances between rows of a and rows of b.
Eigen::MatrixXd distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Exponential correlation exp(-d / rho).
Eigen::MatrixXd exponential_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double rho);

/// Inverse of an SPD matrix through its Cholesky factor.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what);

/// Dense to sparse, dropping exact zeros.
SpMat to_sparse(const Eigen::MatrixXd& m);

}  // namespace cobin::linalg
