#include "postgl/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "postgl/errors.hpp"
#include "postgl/selective.hpp"

namespace postgl {

SplitPlan SplitPlan::make(int n, double r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SplitPlan plan = make(n, r, rng);
    plan.seed = seed;
    return plan;
}

SplitPlan SplitPlan::make(int n, double r, std::mt19937_64& rng) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split fraction r must lie in (0, 1)");
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    // Fisher-Yates with an explicit uniform draw, so the permutation does not
    // depend on the standard library's shuffle implementation.
    for (int i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(rows[i], rows[pick(rng)]);
    }
    const int n1 = static_cast<int>(std::lround(r * n));
    SplitPlan plan;
    plan.r = r;
    plan.selection_rows.assign(rows.begin(), rows.begin() + n1);
    plan.inference_rows.assign(rows.begin() + n1, rows.end());
    std::sort(plan.selection_rows.begin(), plan.selection_rows.end());
    std::sort(plan.inference_rows.begin(), plan.inference_rows.end());
    return plan;
}

void SplitPlan::validate(int n) const {
    if (selection_rows.empty()) throw ConfigError("split leaves no rows for selection");
    if (inference_rows.empty()) throw ConfigError("split leaves no rows for inference");
    std::vector<char> seen(n, 0);
    for (const auto* rows : {&selection_rows, &inference_rows}) {
        for (int i : *rows) {
            if (i < 0 || i >= n) throw ConfigError("split row index out of range");
            if (seen[i]) throw ConfigError("split row " + std::to_string(i) + " appears twice");
            seen[i] = 1;
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ConfigError("split does not cover every row");
}

namespace {

std::vector<int> sizes_of(const GroupStructure& groups, const std::vector<int>& ids) {
    std::vector<int> out;
    for (int g : ids) out.push_back(groups.size(g));
    return out;
}

/// Refit on `ds` for the given groups and fill Wald rows from Sigma_E / n.
void refit_and_fill(InferenceReport& rep, const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                    const std::vector<int>& group_ids, const BaselineOptions& opts) {
    const IndexSet E = groups.columns_of(group_ids);
    const RestrictedFit fit = fit_restricted(model, ds, groups, E, nullptr, opts.newton);
    const MatrixXd cov = fit.Sigma_E / static_cast<double>(ds.n());
    const WaldResult wald = wald_inference(fit.beta_E, cov, sizes_of(groups, group_ids), opts.alpha);
    fill_rows(rep, ds, groups, group_ids, E, wald);
}

}  // namespace

InferenceReport data_splitting_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                         const Penalty& penalty, const SplitPlan& plan, const BaselineOptions& opts) {
    plan.validate(ds.n());
    InferenceReport rep;
    rep.method = Method::split;
    rep.selection_valid = true;
    rep.alpha = opts.alpha;
    rep.seed = plan.seed;
    rep.lambda.assign(penalty.lambda.data(), penalty.lambda.data() + penalty.lambda.size());

    const Dataset sel = ds.subset_rows(plan.selection_rows);
    const Dataset inf = ds.subset_rows(plan.inference_rows);
    const auto t0 = std::chrono::steady_clock::now();
    const GroupLassoSolution sol = solve_group_lasso(model, sel, groups, penalty.scaled(std::sqrt(plan.r)),
                                                     no_randomization(ds.p()), opts.solver);
    if (sol.empty()) {
        rep.status = "nothing_selected";
        rep.message = "the group lasso on the selection rows selected no groups";
        return rep;
    }
    refit_and_fill(rep, model, inf, groups, sol.active_groups, opts);
    rep.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

InferenceReport naive_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                const Penalty& penalty, const BaselineOptions& opts) {
    InferenceReport rep;
    rep.method = Method::naive;
    rep.selection_valid = false;
    rep.alpha = opts.alpha;
    rep.lambda.assign(penalty.lambda.data(), penalty.lambda.data() + penalty.lambda.size());
    const auto t0 = std::chrono::steady_clock::now();
    const GroupLassoSolution sol =
        solve_group_lasso(model, ds, groups, penalty, no_randomization(ds.p()), opts.solver);
    if (sol.empty()) {
        rep.status = "nothing_selected";
        rep.message = "the group lasso selected no groups";
        return rep;
    }
    refit_and_fill(rep, model, ds, groups, sol.active_groups, opts);
    rep.message = "not selection-valid: selection and inference reuse the same data";
    rep.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

InferenceReport classical_inference(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                    const std::vector<int>& group_ids, const BaselineOptions& opts) {
    InferenceReport rep;
    rep.method = Method::naive;
    rep.selection_valid = false;
    rep.alpha = opts.alpha;
    if (group_ids.empty()) {
        rep.status = "nothing_selected";
        return rep;
    }
    refit_and_fill(rep, model, ds, groups, group_ids, opts);
    return rep;
}

}  // namespace postgl
