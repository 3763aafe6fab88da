#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "postgl/model.hpp"

namespace postgl {

/// Per-group penalty weights lambda_g for the sqrt(n)-normalised objective
///
///   (1/sqrt(n)) l(X beta; Y) + sum_g lambda_g ||beta_g||_2 - sqrt(n) omega' beta.
struct Penalty {
    VectorXd lambda;

    /// Throws ConfigError on a non-positive weight (zero allowed with allow_zero).
    void validate(const GroupStructure& groups, bool allow_zero = false) const;
    Penalty scaled(double factor) const { return Penalty{lambda * factor}; }
};

/// lambda_g = base * sqrt((|g| / mean|g|) * n * Var(Y) * 2 log p), the usual
/// weight for the unnormalised loss, divided by sqrt(n) to match the
/// normalised objective above.
Penalty default_lambda(const Dataset& ds, const GroupStructure& groups, double base_lambda);

enum class RandomizationForm { scaled_H, explicit_omega };

/// A realised randomisation draw; sqrt(n) omega ~ N_p(0, Omega).
struct RandomizationSpec {
    RandomizationForm form = RandomizationForm::scaled_H;
    /// Omega = f * scale * H for the scaled form.
    double f = 0.0;
    /// Response-scale factor folded into Omega (residual variance proxy for
    /// gaussian, 1 otherwise).
    double scale = 1.0;
    MatrixXd Omega;
    VectorXd omega;
    std::uint64_t seed = 0;
    bool ridge_repaired = false;
};

/// Draws omega = (1/sqrt(n)) Omega^{1/2} xi. For the scaled form Omega = f * H_hat;
/// for the explicit form `H_or_Omega` is Omega itself and `f` is ignored.
RandomizationSpec draw_randomization(RandomizationForm form, double f, const MatrixXd& H_or_Omega,
                                     std::uint64_t seed, int n);
RandomizationSpec draw_randomization(RandomizationForm form, double f, const MatrixXd& H_or_Omega,
                                     std::mt19937_64& rng, int n);

/// Pre-selection reference matrix for the scaled randomisation:
/// (1/n) X' W0 X at the intercept-only mean, times Var(Y) for gaussian.
/// Returns the matrix and writes the folded scale factor to `scale`.
MatrixXd randomization_reference(const LossModel& model, const Dataset& ds, double* scale = nullptr);

/// Zero randomisation of dimension p (plain group lasso).
RandomizationSpec no_randomization(int p);

struct SolverOptions {
    int max_iter = 5000;
    /// Relative objective change for the proximal-gradient phase.
    double tol = 1e-10;
    double active_tol = 1e-8;
    /// Newton refinement of the active groups after the first-order phase.
    bool polish = true;
    /// Block coordinate descent instead of accelerated proximal gradient.
    bool use_bcd = false;
    bool record_trace = false;
};

struct GroupLassoSolution {
    VectorXd beta;
    std::vector<int> active_groups;
    std::vector<int> inactive_groups;
    IndexSet E;
    VectorXd gamma;
    std::vector<VectorXd> u;
    std::vector<VectorXd> z;
    double kkt_residual = 0.0;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Some group norm sits within a factor of two of active_tol.
    bool degenerate = false;
    std::vector<double> objective_trace;

    bool empty() const { return active_groups.empty(); }
};

/// Value of the randomised group-lasso objective.
double glasso_objective(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                        const Penalty& penalty, const VectorXd& omega, const VectorXd& beta);

/// Group soft-thresholding: max(0, 1 - t lambda / ||v||) v.
VectorXd group_soft_threshold(const VectorXd& v, double threshold);

GroupLassoSolution solve_group_lasso(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                     const Penalty& penalty, const RandomizationSpec& rand,
                                     const SolverOptions& opts = {});

/// Stationarity residual max-norm of
/// (1/sqrt(n)) X' grad l + (lambda u, lambda z) - sqrt(n) omega at the stored triple.
double kkt_stationarity(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                        const Penalty& penalty, const RandomizationSpec& rand, const GroupLassoSolution& sol);

/// True iff the realised selection event holds numerically: every gamma_g
/// exceeds active_tol and every u_g has unit norm.
bool check_selection_event(const GroupLassoSolution& sol, double active_tol = 1e-8);

}  // namespace postgl
