#pragma once

#include "postgl/model.hpp"

namespace postgl {

struct NewtonOptions {
    /// Stop once ||(1/sqrt(n)) X_E' grad l||_inf falls below this.
    double tol = 1e-10;
    int max_iter = 100;
    int max_halvings = 50;
    /// ||beta|| beyond this is treated as divergence (logistic separation).
    double divergence_bound = 1e4;
};

/// Unpenalised M-estimate on the columns E.
struct RestrictedEstimate {
    IndexSet E;
    VectorXd beta_E;
    double gradient_norm = 0.0;
    int iterations = 0;
};

RestrictedEstimate newton_refit(const LossModel& model, const Dataset& ds, const IndexSet& E,
                                const VectorXd* warm_start = nullptr, const NewtonOptions& opts = {});

struct CovarianceBlocks {
    /// H_EE^{-1} K_EE H_EE^{-1}
    MatrixXd Sigma_E;
    /// K_E'E' - K_E'E K_EE^{-1} K_EE'
    MatrixXd Sigma_perp;
    /// H_E'E - K_E'E K_EE^{-1} H_EE
    MatrixXd A_E;
};

/// When K is exactly dispersion * H (every built-in model) the blocks are
/// formed from the scalar relation, which makes A_E identically zero.
CovarianceBlocks covariance_blocks(const MomentMatrices& moments);

struct RestrictedFit {
    IndexSet E;
    IndexSet Eprime;
    VectorXd beta_E;
    VectorXd beta_perp;
    MatrixXd Sigma_E;
    MatrixXd Sigma_perp;
    MatrixXd A_E;
    MomentMatrices moments;
    int n = 0;
    int iterations = 0;
    double gradient_norm = 0.0;
};

/// beta_perp = (1/n) X_E'' grad l(X_E beta_E) - A_E beta_E, in the order of moments.Eprime.
VectorXd compute_beta_perp(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                           const MomentMatrices& moments, const MatrixXd& A_E);

/// Refit, moments at the refit, covariance blocks and beta_perp.
RestrictedFit fit_restricted(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                             const IndexSet& E, const VectorXd* warm_start = nullptr,
                             const NewtonOptions& opts = {});

}  // namespace postgl
