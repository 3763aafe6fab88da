#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "postgl/glasso.hpp"
#include "postgl/report.hpp"
#include "postgl/restricted.hpp"

namespace postgl {

/// Disjoint selection / inference row sets covering [0, n).
struct SplitPlan {
    double r = 0.7;
    std::vector<int> selection_rows;
    std::vector<int> inference_rows;
    std::uint64_t seed = 0;

    /// Uniform sampling without replacement; |selection_rows| = round(r n).
    static SplitPlan make(int n, double r, std::uint64_t seed);
    static SplitPlan make(int n, double r, std::mt19937_64& rng);

    /// Throws ConfigError unless the sets are disjoint, exhaustive and nonempty.
    void validate(int n) const;
};

struct BaselineOptions {
    double alpha = 0.1;
    SolverOptions solver;
    NewtonOptions newton;
};

/// Unrandomised group lasso with penalties sqrt(r) lambda on the selection
/// rows, refit and sandwich Wald inference on the inference rows.
InferenceReport data_splitting_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                         const Penalty& penalty, const SplitPlan& plan,
                                         const BaselineOptions& opts = {});

/// Unrandomised group lasso and Wald inference on the same data; flagged as
/// not selection-valid.
InferenceReport naive_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                const Penalty& penalty, const BaselineOptions& opts = {});

/// Classical sandwich Wald inference for a fixed column set (no selection).
InferenceReport classical_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                    const std::vector<int>& group_ids, const BaselineOptions& opts = {});

}  // namespace postgl
