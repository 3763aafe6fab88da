#include "postgl/pipeline.hpp"

#include <chrono>

namespace postgl {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PostGLResult post_gl_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                               const Penalty& penalty, const RandomizationSpec& rand, const PipelineOptions& opts) {
    PostGLResult out;
    InferenceReport& rep = out.report;
    rep.method = Method::post_gl;
    rep.selection_valid = true;
    rep.alpha = opts.alpha;
    rep.seed = rand.seed;
    rep.randomization_f = rand.f;
    rep.lambda.assign(penalty.lambda.data(), penalty.lambda.data() + penalty.lambda.size());

    auto t0 = std::chrono::steady_clock::now();
    out.solution = solve_group_lasso(model, ds, groups, penalty, rand, opts.solver);
    rep.timings["select"] = seconds_since(t0);
    if (out.solution.empty()) {
        rep.status = "nothing_selected";
        rep.message = "the randomised group lasso selected no groups";
        return out;
    }

    t0 = std::chrono::steady_clock::now();
    const VectorXd warm = out.solution.beta(out.solution.E);
    out.fit = fit_restricted(model, ds, groups, out.solution.E, &warm, opts.newton);
    rep.timings["refit"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    out.problem = build_problem(*out.fit, out.solution, groups, penalty, rand, opts.build);
    out.selective = selective_inference(*out.problem, opts.alpha);
    rep.timings["inference"] = seconds_since(t0);

    fill_rows(rep, ds, groups, out.solution.active_groups, out.solution.E, out.selective->wald);
    rep.variance_bound = out.selective->variance_bound;
    rep.max_inverse_fisher = out.selective->fisher_inverse.cwiseAbs().maxCoeff();
    return out;
}

}  // namespace postgl
