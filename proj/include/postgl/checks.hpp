#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "postgl/glasso.hpp"
#include "postgl/restricted.hpp"
#include "postgl/selective.hpp"

namespace postgl {

/// Random problem used by the property suites: gaussian design, a few
/// signal groups, penalty tuned until the active set has the requested size.
struct InstanceOptions {
    LossKind loss = LossKind::gaussian;
    int n = 120;
    /// Group sizes are drawn uniformly from [min_group_size, max_group_size].
    int num_groups = 8;
    int min_group_size = 1;
    int max_group_size = 3;
    /// Upper limits on the selection; 0 means unlimited.
    int max_active_groups = 0;
    int max_active_columns = 0;
    double f = 1.0;
    double signal = 1.0;
    BuildOptions build;
};

struct Instance {
    LossModel model;
    Dataset ds;
    GroupStructure groups;
    Penalty penalty;
    RandomizationSpec rand;
    GroupLassoSolution sol;
    RestrictedFit fit;
    SelectiveProblem prob;
};

/// Empty when no penalty in the search range yields an admissible,
/// well-conditioned selection.
std::optional<Instance> random_instance(const InstanceOptions& opts, std::mt19937_64& rng);

struct CheckResult {
    explicit CheckResult(std::string check_name = {}) : name(std::move(check_name)) {}

    std::string name;
    bool pass = true;
    int instances = 0;
    int skipped = 0;
    /// Worst observed value of the checked quantity, against `tolerance`.
    double worst = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// Running tally of max |I^{-1}_ij| against the bound u0 (1 + u0^2) / n.
struct BoundTally {
    int checked = 0;
    int violations = 0;
    double worst_ratio = 0.0;

    void add(double max_inverse, double bound);
    void add(const SelectiveProblem& prob, const SelectiveFit& fit);
};

/// KKT suite (gaussian): stationarity residual, subgradient norms and
/// exact reconstruction of sqrt(n) omega through the change of variables.
std::vector<CheckResult> check_kkt(int count, std::uint64_t seed, BoundTally* tally = nullptr);

/// log J gradient and Hessian against central differences; singleton-only
/// selections must give log J = 0 exactly.
std::vector<CheckResult> check_jacobian(int count, std::uint64_t seed, BoundTally* tally = nullptr);

/// Selective MLE and Fisher information against the brute-force likelihood;
/// g* for one active group against bisection.
std::vector<CheckResult> check_mle_oracle(int count, std::uint64_t seed, BoundTally* tally = nullptr);

/// Shortcut and general constructions of (A_bar, b_bar, Omega_bar) with Omega = f H.
CheckResult check_shortcut(int count, std::uint64_t seed, BoundTally* tally = nullptr);

/// Scalar g* by bisection on the derivative of the g* objective.
double gstar_bisection(const SelectiveProblem& prob, const VectorXd& b_scaled, double tol = 1e-13);

}  // namespace postgl
