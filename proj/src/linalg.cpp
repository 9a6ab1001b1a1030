#include "cobin/linalg.hpp"

#include <string>

#include "cobin/error.hpp"

namespace cobin::linalg {

Eigen::VectorXd standard_normals(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& Q, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string("Cholesky failed: ") + what + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd sample_canonical(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& b,
                                 Rng& rng) {
  // Q = L L^T: mean = Q^{-1} b, noise = L^{-T} z
  Eigen::VectorXd w = llt.matrixL().solve(b);
  w += standard_normals(b.size(), rng);
  return llt.matrixU().solve(w);
}

void SparseChol::compute(const SpMat& Q, const char* what) {
  bool ok;
  if (natural_) {
    nat_.compute(Q);
    ok = nat_.info() == Eigen::Success;
  } else {
    amd_.compute(Q);
    ok = amd_.info() == Eigen::Success;
  }
  if (!ok) throw NumericalError(std::string("sparse Cholesky failed: ") + what + " is not positive definite");
}

Eigen::VectorXd SparseChol::solve(const Eigen::VectorXd& b) const {
  return natural_ ? Eigen::VectorXd(nat_.solve(b)) : Eigen::VectorXd(amd_.solve(b));
}

Eigen::MatrixXd SparseChol::solve(const Eigen::MatrixXd& b) const {
  return natural_ ? Eigen::MatrixXd(nat_.solve(b)) : Eigen::MatrixXd(amd_.solve(b));
}

double SparseChol::log_det() const {
  const Eigen::VectorXd d = natural_ ? Eigen::VectorXd(nat_.matrixL().toDense().diagonal())
                                     : Eigen::VectorXd(amd_.matrixL().toDense().diagonal());
  return 2.0 * d.array().log().sum();
}

Eigen::VectorXd SparseChol::sample(const Eigen::VectorXd& b, Rng& rng) const {
  // P Q P^T = L L^T, so Q^{-1} = P^T L^{-T} L^{-1} P and P^T L^{-T} z has covariance Q^{-1}
  const Eigen::VectorXd z = standard_normals(b.size(), rng);
  Eigen::VectorXd noise;
  if (natural_) {
    noise = nat_.matrixU().solve(z);
  } else {
    noise = amd_.permutationPinv() * Eigen::VectorXd(amd_.matrixU().solve(z));
  }
  return solve(b) + noise;
}

Eigen::MatrixXd distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw DomainError("coordinate dimensions differ");
  Eigen::MatrixXd d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

Eigen::MatrixXd exponential_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double rho) {
  if (!(rho > 0.0)) throw DomainError("kernel range rho must be positive");
  return (-distances(a, b).array() / rho).exp().matrix();
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  const auto llt = checked_llt(m, what);
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

SpMat to_sparse(const Eigen::MatrixXd& m) {
  SpMat s = m.sparseView(0.0, 0.0);
  s.makeCompressed();
  return s;
}

}  // namespace cobin::linalg
