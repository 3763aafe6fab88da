#pragma once

#include <optional>

#include "postgl/glasso.hpp"
#include "postgl/report.hpp"
#include "postgl/restricted.hpp"
#include "postgl/selective.hpp"

namespace postgl {

struct PipelineOptions {
    double alpha = 0.1;
    SolverOptions solver;
    NewtonOptions newton;
    BuildOptions build;
};

/// Everything produced along the randomised path, kept for diagnostics.
struct PostGLResult {
    InferenceReport report;
    GroupLassoSolution solution;
    std::optional<RestrictedFit> fit;
    std::optional<SelectiveProblem> problem;
    std::optional<SelectiveFit> selective;
};

/// Randomised group lasso, refit on the selection, selective MLE and Wald
/// inference. An empty selection yields a "nothing_selected" report; numerical
/// failures propagate as exceptions.
PostGLResult post_gl_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                               const Penalty& penalty, const RandomizationSpec& rand,
                               const PipelineOptions& opts = {});

}  // namespace postgl
