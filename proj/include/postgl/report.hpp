#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "postgl/model.hpp"
#include "postgl/selective.hpp"

namespace postgl {

enum class Method { post_gl, split, naive };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct CoefficientRow {
    std::string name;
    std::string group;
    int column = -1;
    double estimate = 0.0;
    double std_error = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double pvalue = 1.0;

    bool operator==(const CoefficientRow&) const = default;
};

struct GroupRow {
    std::string group;
    double chi2 = 0.0;
    int df = 0;
    double pvalue = 1.0;

    bool operator==(const GroupRow&) const = default;
};

/// Output of one inference method on one dataset. Rows exist only for
/// selected coefficients, in the order of the active set.
struct InferenceReport {
    Method method = Method::post_gl;
    /// "ok", "nothing_selected" or "failed".
    std::string status = "ok";
    std::string message;
    /// False for the naive baseline, which ignores selection.
    bool selection_valid = true;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    std::vector<int> selected_group_ids;
    std::vector<std::string> selected_groups;
    IndexSet E;
    std::vector<double> lambda;
    std::vector<CoefficientRow> coefficients;
    std::vector<GroupRow> groups;
    /// Post-GL only: randomisation scale, Fisher-inverse bound and observed maximum.
    double randomization_f = 0.0;
    double variance_bound = 0.0;
    double max_inverse_fisher = 0.0;
    std::map<std::string, double> timings;
    nlohmann::json config;

    bool ok() const { return status == "ok"; }
    bool operator==(const InferenceReport&) const = default;
};

/// Rows for the active set from a Wald result; `E` and `active_groups` in group order.
void fill_rows(InferenceReport& report, const Dataset& ds, const GroupStructure& groups,
               const std::vector<int>& active_groups, const IndexSet& E, const WaldResult& wald);

nlohmann::json to_json(const InferenceReport& r);
InferenceReport report_from_json(const nlohmann::json& j);

/// Coefficient table: name, group, estimate, std_error, ci_lower, ci_upper, p_value.
std::string coefficients_csv(const InferenceReport& r);
/// Group table: group, chi2, df, p_value.
std::string groups_csv(const InferenceReport& r);

}  // namespace postgl
