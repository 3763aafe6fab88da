#pragma once

#include <Eigen/Dense>
#include <string>

#include "postgl/errors.hpp"

namespace postgl::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cholesky factorisation that also rejects numerically singular matrices
/// (squared pivot ratio below `rcond`).
inline bool is_factor_ok(const Eigen::LLT<MatrixXd>& llt, double rcond = 1e-13) {
    if (llt.info() != Eigen::Success) return false;
    const auto d = llt.matrixLLT().diagonal();
    if (d.size() == 0) return true;
    const double lo = d.minCoeff();
    const double hi = d.maxCoeff();
    return lo > 0 && (lo / hi) * (lo / hi) > rcond;
}

inline Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& A, const std::string& what) {
    Eigen::LLT<MatrixXd> llt(A);
    if (!is_factor_ok(llt)) throw DomainError(what + " is not positive definite");
    return llt;
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
inline MatrixXd spd_inverse(const MatrixXd& A, const std::string& what) {
    if (A.rows() == 0) return MatrixXd(0, 0);
    auto llt = checked_llt(A, what);
    MatrixXd inv = llt.solve(MatrixXd::Identity(A.rows(), A.cols()));
    return 0.5 * (inv + inv.transpose());
}

inline MatrixXd symmetrize(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

inline double max_asymmetry(const MatrixXd& A) {
    if (A.size() == 0) return 0.0;
    return (A - A.transpose()).cwiseAbs().maxCoeff();
}

inline double lambda_max(const MatrixXd& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline double lambda_min(const MatrixXd& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Symmetric square root of a PSD matrix.
inline MatrixXd sym_sqrt(const MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A));
    VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace postgl::linalg
