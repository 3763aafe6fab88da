#pragma once

#include <vector>

#include "postgl/glasso.hpp"
#include "postgl/model.hpp"
#include "postgl/restricted.hpp"

namespace postgl {

/// Conditional-likelihood geometry for one selection event.
///
/// Every p-dimensional object uses the permuted column order [E ; E'] with
/// both parts in group order. Scaled quantities carry a factor sqrt(n):
/// the variables of the likelihood are b = sqrt(n) beta_E and g = sqrt(n) gamma.
/// Immutable after build_problem.
struct SelectiveProblem {
    int n = 0;
    IndexSet E;
    IndexSet Eprime;
    std::vector<int> active_groups;
    std::vector<int> inactive_groups;
    /// Group sizes of the active groups, in order.
    std::vector<int> active_sizes;

    /// Diagonals of Lambda_E and Lambda_E'.
    VectorXd lambda_E;
    VectorXd lambda_Eprime;

    MatrixXd A_cal;  // p x |E|, -K_E K_EE^{-1} H_EE
    MatrixXd B_cal;  // p x |E|, H_E
    MatrixXd C_cal;  // p x |E'|, (0, I)'
    MatrixXd D_cal;  // p x |E|, (I, 0)' Lambda_E

    MatrixXd U_hat;  // |E| x |G_E|, bd(u)
    MatrixXd U_bar;  // |E| x (|E| - |G_E|), orthonormal completion per group

    VectorXd u_stack;           // stacked unit directions
    VectorXd z_stack;           // stacked inactive subgradients
    VectorXd beta_perp_scaled;  // sqrt(n) beta_perp
    /// Fixed part of the map: C (sqrt(n) beta_perp + Lambda_E' z) + D u,
    /// plus the linearisation remainder when it is absorbed.
    VectorXd c_vec;
    /// sqrt(n) omega minus the affine map at the observed point (zero unless absorbed).
    VectorXd linearization_remainder;

    MatrixXd Omega;      // randomisation covariance, permuted
    MatrixXd Sigma_E;
    MatrixXd Sigma_E_inv;
    MatrixXd H_EE;

    MatrixXd A_bar;
    VectorXd b_bar;
    MatrixXd Omega_bar;
    MatrixXd Omega_bar_inv;
    MatrixXd Theta_bar;
    MatrixXd Theta_bar_inv;
    MatrixXd R_bar;
    MatrixXd R_bar_inv;
    VectorXd s_bar;
    /// A_cal' Omega^{-1} A_cal, used by the variance bound.
    MatrixXd AOA;

    /// U_bar' H_EE^{-1} Lambda_E U_bar; the Jacobian matrix is Gamma(g) + this.
    MatrixXd jacobian_offset;
    /// Column blocks M_g of U_bar, as (start, length) per active group.
    std::vector<std::pair<int, int>> jacobian_blocks;

    VectorXd beta_E_scaled;  // sqrt(n) beta_E
    VectorXd gamma_scaled;   // sqrt(n) gamma

    double barrier_c = 0.0;
    bool used_shortcut = false;
    /// Largest disagreement between shortcut and general constructions of
    /// (A_bar, b_bar, Omega_bar); zero when the shortcut does not apply.
    double shortcut_discrepancy = 0.0;

    int num_active_groups() const { return static_cast<int>(active_groups.size()); }
    int dim_E() const { return static_cast<int>(E.size()); }
};

struct BuildOptions {
    double barrier_c = 0.0;
    /// Use the Omega = f H closed forms when Omega is proportional to H.
    bool allow_shortcut = true;
    /// Relative agreement required between the two constructions.
    double shortcut_check_tol = 1e-8;
    /// Make the map reproduce sqrt(n) omega exactly at the observed data.
    bool absorb_remainder = true;
};

/// Orthonormal completion of a unit vector u (|u| x (|u| - 1)) by Gram-Schmidt.
MatrixXd orthogonal_completion(const VectorXd& u);

SelectiveProblem build_problem(const RestrictedFit& fit, const GroupLassoSolution& sol, const GroupStructure& groups,
                               const Penalty& penalty, const RandomizationSpec& rand, const BuildOptions& opts = {});

/// The change-of-variables map A b + B U_hat g + c_vec, in permuted order.
VectorXd pi_map(const SelectiveProblem& prob, const VectorXd& b_scaled, const VectorXd& g_scaled);

/// Constructions of (A_bar, b_bar, Omega_bar) exposed for cross-checking.
struct ConditionalParams {
    MatrixXd A_bar;
    VectorXd b_bar;
    MatrixXd Omega_bar;
};
ConditionalParams general_conditional_params(const SelectiveProblem& prob);
/// Valid when Omega = f H; f is recovered from the stored Omega.
ConditionalParams shortcut_conditional_params(const SelectiveProblem& prob, double f);

double log_jacobian(const SelectiveProblem& prob, const VectorXd& g);
VectorXd grad_log_jacobian(const SelectiveProblem& prob, const VectorXd& g);
MatrixXd hess_log_jacobian(const SelectiveProblem& prob, const VectorXd& g);

/// sum_k log(1 + 1/(v_k - c)).
double barrier(const VectorXd& v, double c);
VectorXd grad_barrier(const VectorXd& v, double c);
/// Diagonal of the barrier Hessian.
VectorXd hess_barrier(const VectorXd& v, double c);

/// 0.5 (g - mu)' Omega_bar^{-1} (g - mu) - log J(g) + Barr(g) with mu = A_bar b + b_bar.
double gstar_objective(const SelectiveProblem& prob, const VectorXd& b_scaled, const VectorXd& g);

struct GstarResult {
    VectorXd g;
    int iterations = 0;
    double gradient_norm = 0.0;
    /// Hessian of -log J + Barr at g (for the Fisher information).
    MatrixXd curvature;
};

GstarResult solve_gstar(const SelectiveProblem& prob, const VectorXd& b_scaled);

/// Selective MLE on the coefficient scale.
VectorXd selective_mle(const SelectiveProblem& prob, const VectorXd& gstar);

/// I_{n,mle} = n Sigma_E^{-1} M^{-1} Sigma_E^{-1}; also returns its inverse Sigma_E M Sigma_E / n.
struct FisherInfo {
    MatrixXd fisher;
    MatrixXd inverse;
    double asymmetry = 0.0;
};
FisherInfo observed_fisher(const SelectiveProblem& prob, const VectorXd& gstar);

/// u0 = max(lambda_max(Sigma_E), lambda_max(A_cal' Omega^{-1} A_cal)); bound = u0 (1 + u0^2) / n.
double variance_bound(const SelectiveProblem& prob);

struct WaldResult {
    VectorXd estimate;
    VectorXd std_error;
    VectorXd lower;
    VectorXd upper;
    VectorXd pvalue;
    /// Per group: chi-square statistic, df, p-value.
    VectorXd group_stat;
    std::vector<int> group_df;
    VectorXd group_pvalue;
    double alpha = 0.1;
};

/// Wald intervals and p-values from an estimate and the covariance of that
/// estimate. `group_sizes` partitions the coordinates into consecutive blocks.
WaldResult wald_inference(const VectorXd& estimate, const MatrixXd& covariance, const std::vector<int>& group_sizes,
                          double alpha);

struct SelectiveFit {
    VectorXd mle;
    VectorXd gstar;
    MatrixXd fisher;
    MatrixXd fisher_inverse;
    WaldResult wald;
    double variance_bound = 0.0;
    int gstar_iterations = 0;
};

SelectiveFit selective_inference(const SelectiveProblem& prob, double alpha);

/// Brute-force evaluation of the post-selection log-likelihood at t = sqrt(n) b*,
/// solving the inner two-block infimum jointly over (b, g) by Newton's method.
struct InnerSolution {
    double value = 0.0;
    VectorXd b;
    VectorXd g;
};
InnerSolution brute_force_inner(const SelectiveProblem& prob, const VectorXd& t_scaled);
double brute_force_loglik(const SelectiveProblem& prob, const VectorXd& t_scaled);
/// Its gradient in t by the envelope theorem.
VectorXd brute_force_score(const SelectiveProblem& prob, const VectorXd& t_scaled);

struct BruteForceMle {
    VectorXd mle;            // coefficient scale
    MatrixXd fisher;         // n times minus the finite-difference Hessian in t
    int iterations = 0;
};
/// Maximises the brute-force likelihood by Newton's method with a
/// finite-difference Hessian of the score.
BruteForceMle brute_force_mle(const SelectiveProblem& prob);

}  // namespace postgl
