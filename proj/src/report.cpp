#include "postgl/report.hpp"

#include <iomanip>
#include <sstream>

#include "postgl/errors.hpp"

namespace postgl {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::post_gl: return "post_gl";
        case Method::split: return "split";
        case Method::naive: return "naive";
    }
    return "unknown";
}

Method method_from_string(std::string_view name) {
    if (name == "post_gl") return Method::post_gl;
    if (name == "split") return Method::split;
    if (name == "naive") return Method::naive;
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

void fill_rows(InferenceReport& report, const Dataset& ds, const GroupStructure& groups,
               const std::vector<int>& active_groups, const IndexSet& E, const WaldResult& wald) {
    report.selected_group_ids = active_groups;
    report.selected_groups.clear();
    for (int g : active_groups) report.selected_groups.push_back(groups.label(g));
    report.E = E;
    report.coefficients.clear();
    for (std::size_t k = 0; k < E.size(); ++k) {
        const int j = E[k];
        const int i = static_cast<int>(k);
        CoefficientRow row;
        row.column = j;
        row.name = j < static_cast<int>(ds.column_names.size()) ? ds.column_names[j] : "x" + std::to_string(j);
        row.group = groups.label(groups.group_of(j));
        row.estimate = wald.estimate(i);
        row.std_error = wald.std_error(i);
        row.lower = wald.lower(i);
        row.upper = wald.upper(i);
        row.pvalue = wald.pvalue(i);
        report.coefficients.push_back(row);
    }
    report.groups.clear();
    for (std::size_t a = 0; a < active_groups.size(); ++a) {
        GroupRow row;
        row.group = groups.label(active_groups[a]);
        row.chi2 = wald.group_stat(static_cast<int>(a));
        row.df = wald.group_df[a];
        row.pvalue = wald.group_pvalue(static_cast<int>(a));
        report.groups.push_back(row);
    }
}

nlohmann::json to_json(const InferenceReport& r) {
    nlohmann::json j;
    j["method"] = std::string(to_string(r.method));
    j["status"] = r.status;
    j["message"] = r.message;
    j["selection_valid"] = r.selection_valid;
    j["alpha"] = r.alpha;
    j["seed"] = r.seed;
    j["selected_group_ids"] = r.selected_group_ids;
    j["selected_groups"] = r.selected_groups;
    j["E"] = r.E;
    j["lambda"] = r.lambda;
    j["randomization_f"] = r.randomization_f;
    j["variance_bound"] = r.variance_bound;
    j["max_inverse_fisher"] = r.max_inverse_fisher;
    j["timings"] = r.timings;
    j["config"] = r.config;
    auto& coefs = j["coefficients"] = nlohmann::json::array();
    for (const auto& c : r.coefficients) {
        coefs.push_back({{"name", c.name},
                         {"group", c.group},
                         {"column", c.column},
                         {"estimate", c.estimate},
                         {"std_error", c.std_error},
                         {"ci_lower", c.lower},
                         {"ci_upper", c.upper},
                         {"p_value", c.pvalue}});
    }
    auto& groups = j["groups"] = nlohmann::json::array();
    for (const auto& g : r.groups) {
        groups.push_back({{"group", g.group}, {"chi2", g.chi2}, {"df", g.df}, {"p_value", g.pvalue}});
    }
    return j;
}

InferenceReport report_from_json(const nlohmann::json& j) {
    InferenceReport r;
    r.method = method_from_string(j.at("method").get<std::string>());
    r.status = j.at("status").get<std::string>();
    r.message = j.at("message").get<std::string>();
    r.selection_valid = j.at("selection_valid").get<bool>();
    r.alpha = j.at("alpha").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.selected_group_ids = j.at("selected_group_ids").get<std::vector<int>>();
    r.selected_groups = j.at("selected_groups").get<std::vector<std::string>>();
    r.E = j.at("E").get<IndexSet>();
    r.lambda = j.at("lambda").get<std::vector<double>>();
    r.randomization_f = j.at("randomization_f").get<double>();
    r.variance_bound = j.at("variance_bound").get<double>();
    r.max_inverse_fisher = j.at("max_inverse_fisher").get<double>();
    r.timings = j.at("timings").get<std::map<std::string, double>>();
    r.config = j.at("config");
    for (const auto& c : j.at("coefficients")) {
        CoefficientRow row;
        row.name = c.at("name").get<std::string>();
        row.group = c.at("group").get<std::string>();
        row.column = c.at("column").get<int>();
        row.estimate = c.at("estimate").get<double>();
        row.std_error = c.at("std_error").get<double>();
        row.lower = c.at("ci_lower").get<double>();
        row.upper = c.at("ci_upper").get<double>();
        row.pvalue = c.at("p_value").get<double>();
        r.coefficients.push_back(row);
    }
    for (const auto& g : j.at("groups")) {
        GroupRow row;
        row.group = g.at("group").get<std::string>();
        row.chi2 = g.at("chi2").get<double>();
        row.df = g.at("df").get<int>();
        row.pvalue = g.at("p_value").get<double>();
        r.groups.push_back(row);
    }
    return r;
}

namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

}  // namespace

std::string coefficients_csv(const InferenceReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "name,group,estimate,std_error,ci_lower,ci_upper,p_value\n";
    for (const auto& c : r.coefficients) {
        os << quote(c.name) << ',' << quote(c.group) << ',' << c.estimate << ',' << c.std_error << ',' << c.lower
           << ',' << c.upper << ',' << c.pvalue << '\n';
    }
    return os.str();
}

std::string groups_csv(const InferenceReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "group,chi2,df,p_value\n";
    for (const auto& g : r.groups) os << quote(g.group) << ',' << g.chi2 << ',' << g.df << ',' << g.pvalue << '\n';
    return os.str();
}

}  // namespace postgl
