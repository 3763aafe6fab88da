#include "postgl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "postgl/baselines.hpp"
#include "postgl/errors.hpp"
#include "postgl/pipeline.hpp"

namespace postgl {

int CsvTable::column_index(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        if (ch == '"') {
            in_quotes = true;
            any = true;
        } else if (ch == ',') {
            record.push_back(field);
            field.clear();
            any = true;
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                record.push_back(field);
                records.push_back(record);
            }
            record.clear();
            field.clear();
            any = false;
        } else {
            field += ch;
            any = true;
        }
    }
    if (in_quotes) throw ConfigError("CSV ends inside a quoted field");
    if (any || !field.empty()) {
        record.push_back(field);
        records.push_back(record);
    }
    if (records.empty()) throw ConfigError("CSV input has no header");

    CsvTable t;
    t.header = records.front();
    std::set<std::string> seen;
    for (const auto& h : t.header) {
        if (!seen.insert(h).second) throw ConfigError("CSV header repeats column '" + h + "'");
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw ConfigError("CSV data row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

namespace {

constexpr const char* kInterceptName = "(intercept)";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double& out) {
    const std::string s = trim(cell);
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

bool is_missing(const std::string& cell) {
    const std::string s = trim(cell);
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

MatrixXd read_matrix_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ls, cell, ',')) {
            double v = 0.0;
            if (!parse_double(cell, v)) numeric = false;
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty()) continue;  // header line
            throw ConfigError("matrix file '" + path + "' has a non-numeric cell in row " +
                              std::to_string(rows.size() + 1));
        }
        rows.push_back(row);
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    MatrixXd M(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != n) throw ConfigError("matrix file '" + path + "' is not square");
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = rows[i][j];
    }
    return M;
}

std::vector<Method> AnalysisConfig::methods() const {
    if (method == "all") return {Method::post_gl, Method::split, Method::naive};
    return {method_from_string(method)};
}

void AnalysisConfig::validate() const {
    auto require = [](bool ok, const std::string& field, const std::string& what) {
        if (!ok) throw ConfigError("analysis config: field '/" + field + "' " + what);
    };
    require(!data_path.empty(), "data_path", "is required");
    require(!response_column.empty(), "response_column", "is required");
    require(base_lambda > 0.0, "base_lambda", "must be positive");
    require(lambda >= 0.0, "lambda", "must be non-negative");
    require(f >= 0.0, "f", "must be non-negative");
    require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0, 1)");
    require(split_r > 0.0 && split_r < 1.0, "split_r", "must lie in (0, 1)");
    if (method != "all") {
        try {
            method_from_string(method);
        } catch (const ConfigError&) {
            require(false, "method", "must be post_gl, split, naive or all");
        }
    }
}

nlohmann::json AnalysisConfig::to_json() const {
    return {{"data_path", data_path},
            {"response_column", response_column},
            {"model", std::string(to_string(model))},
            {"columns", columns},
            {"exclude", exclude},
            {"categoricals", categoricals},
            {"groups", groups},
            {"full_one_hot", full_one_hot},
            {"standardize", standardize},
            {"intercept", intercept},
            {"base_lambda", base_lambda},
            {"lambda", lambda},
            {"f", f},
            {"omega_path", omega_path},
            {"alpha", alpha},
            {"seed", seed},
            {"method", method},
            {"split_r", split_r},
            {"output_prefix", output_prefix}};
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("analysis config: field '/") + key + "' has the wrong type");
    }
}

}  // namespace

AnalysisConfig AnalysisConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("analysis config: top level must be an object");
    const nlohmann::json known = AnalysisConfig{}.to_json();
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("analysis config: unknown field '/" + key + "'");
    }
    AnalysisConfig c;
    read_field(j, "data_path", c.data_path);
    read_field(j, "response_column", c.response_column);
    std::string model(to_string(c.model));
    read_field(j, "model", model);
    try {
        c.model = loss_kind_from_string(model);
    } catch (const ConfigError&) {
        throw ConfigError("analysis config: field '/model' has unknown value '" + model + "'");
    }
    read_field(j, "columns", c.columns);
    read_field(j, "exclude", c.exclude);
    read_field(j, "categoricals", c.categoricals);
    read_field(j, "groups", c.groups);
    read_field(j, "full_one_hot", c.full_one_hot);
    read_field(j, "standardize", c.standardize);
    read_field(j, "intercept", c.intercept);
    read_field(j, "base_lambda", c.base_lambda);
    read_field(j, "lambda", c.lambda);
    read_field(j, "f", c.f);
    read_field(j, "omega_path", c.omega_path);
    read_field(j, "alpha", c.alpha);
    read_field(j, "seed", c.seed);
    read_field(j, "method", c.method);
    read_field(j, "split_r", c.split_r);
    read_field(j, "output_prefix", c.output_prefix);
    return c;
}

nlohmann::json EncodedDesign::preprocessing_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& t : transforms) {
        cols.push_back({{"name", t.name},
                        {"source", t.source},
                        {"categorical", t.categorical},
                        {"center", t.center},
                        {"scale", t.scale}});
    }
    return {{"note",
             "columns are centred and continuous columns divided by their sd before fitting; reported estimates and "
             "intervals are on the original scale (divided back by scale); no intercept column"},
            {"response_center", response_center},
            {"reference_levels", reference_levels},
            {"columns", cols}};
}

namespace {

/// Sorted distinct levels; numerically when every level parses as a number.
std::vector<std::string> levels_of(const CsvTable& t, int col) {
    std::set<std::string> distinct;
    for (const auto& row : t.rows) distinct.insert(trim(row[col]));
    std::vector<std::string> levels(distinct.begin(), distinct.end());
    bool numeric = true;
    for (const auto& l : levels) {
        double v;
        if (!parse_double(l, v)) numeric = false;
    }
    if (numeric) {
        std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
            double x = 0, y = 0;
            parse_double(a, x);
            parse_double(b, y);
            return x < y;
        });
    }
    return levels;
}

}  // namespace

EncodedDesign encode(const CsvTable& table, const AnalysisConfig& cfg) {
    const int ycol = table.column_index(cfg.response_column);
    if (ycol < 0) throw ConfigError("response column '" + cfg.response_column + "' not found in the CSV header");
    for (const auto* list : {&cfg.columns, &cfg.exclude, &cfg.categoricals}) {
        for (const auto& name : *list) {
            if (table.column_index(name) < 0) throw ConfigError("column '" + name + "' not found in the CSV header");
        }
    }
    for (const auto& [name, _] : cfg.groups) {
        if (table.column_index(name) < 0) throw ConfigError("grouped column '" + name + "' not found in the CSV header");
    }

    std::vector<std::string> predictors = cfg.columns;
    if (predictors.empty()) {
        for (const auto& h : table.header) {
            if (h == cfg.response_column) continue;
            if (std::find(cfg.exclude.begin(), cfg.exclude.end(), h) != cfg.exclude.end()) continue;
            predictors.push_back(h);
        }
    }
    if (std::find(predictors.begin(), predictors.end(), cfg.response_column) != predictors.end()) {
        throw ConfigError("response column '" + cfg.response_column + "' is also listed as a predictor");
    }
    if (predictors.empty()) throw ConfigError("no predictor columns");
    for (const auto& c : cfg.categoricals) {
        if (std::find(predictors.begin(), predictors.end(), c) == predictors.end()) {
            throw ConfigError("categorical column '" + c + "' is not among the predictors");
        }
    }

    std::vector<int> used{ycol};
    for (const auto& name : predictors) used.push_back(table.column_index(name));
    std::vector<int> bad_rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (int c : used) {
            if (is_missing(table.rows[r][c])) {
                bad_rows.push_back(static_cast<int>(r) + 1);
                break;
            }
        }
    }
    if (!bad_rows.empty()) {
        std::string list;
        for (std::size_t k = 0; k < bad_rows.size(); ++k) list += (k ? ", " : "") + std::to_string(bad_rows[k]);
        throw ConfigError("missing values in data rows " + list + " (no imputation is performed)");
    }
    const int n = static_cast<int>(table.rows.size());
    if (n == 0) throw ConfigError("CSV has no data rows");

    EncodedDesign out;
    std::vector<VectorXd> cols;
    std::vector<std::string> col_group;
    auto label_for = [&](const std::string& source) {
        const auto it = cfg.groups.find(source);
        return it == cfg.groups.end() ? source : it->second;
    };

    for (const auto& name : predictors) {
        const int c = table.column_index(name);
        const bool categorical =
            std::find(cfg.categoricals.begin(), cfg.categoricals.end(), name) != cfg.categoricals.end();
        if (categorical) {
            const auto levels = levels_of(table, c);
            if (levels.size() < 2) throw ConfigError("categorical column '" + name + "' has a single level");
            out.reference_levels[name] = levels.front();
            for (std::size_t l = cfg.full_one_hot ? 0 : 1; l < levels.size(); ++l) {
                VectorXd v(n);
                for (int r = 0; r < n; ++r) v(r) = trim(table.rows[r][c]) == levels[l] ? 1.0 : 0.0;
                cols.push_back(v);
                ColumnTransform t;
                t.name = name + ":" + levels[l];
                t.source = name;
                t.categorical = true;
                out.transforms.push_back(t);
                col_group.push_back(label_for(name));
            }
        } else {
            VectorXd v(n);
            for (int r = 0; r < n; ++r) {
                if (!parse_double(table.rows[r][c], v(r))) {
                    throw ConfigError("column '" + name + "' is not numeric in data row " + std::to_string(r + 1) +
                                      "; declare it categorical");
                }
            }
            cols.push_back(v);
            ColumnTransform t;
            t.name = name;
            t.source = name;
            out.transforms.push_back(t);
            col_group.push_back(label_for(name));
        }
    }

    const bool with_intercept = cfg.intercept && cfg.model != LossKind::gaussian;
    if (with_intercept) {
        const bool clash = std::find(predictors.begin(), predictors.end(), kInterceptName) != predictors.end() ||
                           std::any_of(cfg.groups.begin(), cfg.groups.end(),
                                       [](const auto& kv) { return kv.second == kInterceptName; });
        if (clash) throw ConfigError("the name '" + std::string(kInterceptName) + "' is reserved");
        cols.push_back(VectorXd::Ones(n));
        ColumnTransform t;
        t.name = kInterceptName;
        t.source = kInterceptName;
        out.transforms.push_back(t);
        col_group.push_back(kInterceptName);
    }

    const int p = static_cast<int>(cols.size());
    out.ds.X.resize(n, p);
    for (int j = 0; j < p; ++j) {
        auto& t = out.transforms[j];
        VectorXd v = cols[j];
        const bool constant = with_intercept && j == p - 1;
        if (cfg.standardize && !constant) {
            t.center = v.mean();
            v.array() -= t.center;
            if (!t.categorical) {
                const double sd = n > 1 ? std::sqrt(v.squaredNorm() / (n - 1)) : 0.0;
                if (!(sd > 0.0)) throw ConfigError("column '" + t.name + "' is constant");
                t.scale = sd;
                v /= sd;
            }
        }
        out.ds.X.col(j) = v;
        out.ds.column_names.push_back(t.name);
    }

    out.ds.y.resize(n);
    for (int r = 0; r < n; ++r) {
        if (!parse_double(table.rows[r][ycol], out.ds.y(r))) {
            throw ConfigError("response column '" + cfg.response_column + "' is not numeric in data row " +
                              std::to_string(r + 1));
        }
    }
    if (cfg.model == LossKind::gaussian && cfg.standardize) {
        out.response_center = out.ds.y.mean();
        out.ds.y.array() -= out.response_center;
    }

    // Groups in order of first appearance of their label.
    std::vector<std::string> labels;
    std::vector<IndexSet> members;
    for (int j = 0; j < p; ++j) {
        const auto it = std::find(labels.begin(), labels.end(), col_group[j]);
        if (it == labels.end()) {
            labels.push_back(col_group[j]);
            members.push_back({j});
        } else {
            members[it - labels.begin()].push_back(j);
        }
    }
    if (with_intercept) out.intercept_group = static_cast<int>(labels.size()) - 1;
    out.groups = GroupStructure(std::move(members), std::move(labels));
    out.groups.validate(p);
    validate_dataset(LossModel{cfg.model}, out.ds);
    return out;
}

void back_transform(InferenceReport& report, const EncodedDesign& design) {
    for (auto& row : report.coefficients) {
        const double s = design.transforms.at(row.column).scale;
        row.estimate /= s;
        row.std_error /= s;
        row.lower /= s;
        row.upper /= s;
    }
}

namespace {

std::mt19937_64 analysis_stream(std::uint64_t seed, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), tag};
    return std::mt19937_64(seq);
}

}  // namespace

std::vector<InferenceReport> run_analysis(const AnalysisConfig& cfg, const EncodedDesign& design) {
    const LossModel model{cfg.model};
    const Dataset& ds = design.ds;
    Penalty penalty;
    if (cfg.lambda > 0.0) {
        penalty.lambda.resize(design.groups.num_groups());
        for (int g = 0; g < design.groups.num_groups(); ++g)
            penalty.lambda(g) = cfg.lambda * std::sqrt(static_cast<double>(design.groups.size(g)));
    } else {
        penalty = default_lambda(ds, design.groups, cfg.base_lambda);
    }
    if (design.intercept_group >= 0) penalty.lambda(design.intercept_group) = 0.0;
    penalty.validate(design.groups, /*allow_zero=*/design.intercept_group >= 0);

    nlohmann::json echo;
    echo["analysis"] = cfg.to_json();
    echo["preprocessing"] = design.preprocessing_json();
    echo["n"] = ds.n();
    echo["p"] = ds.p();

    std::vector<InferenceReport> reports;
    for (Method m : cfg.methods()) {
        InferenceReport rep;
        try {
            if (m == Method::post_gl) {
                auto rng = analysis_stream(cfg.seed, 1);
                RandomizationSpec rand;
                if (!cfg.omega_path.empty()) {
                    const MatrixXd Omega = read_matrix_csv(cfg.omega_path);
                    if (Omega.rows() != ds.p()) {
                        throw ConfigError("Omega in '" + cfg.omega_path + "' is " + std::to_string(Omega.rows()) +
                                          " x " + std::to_string(Omega.cols()) + ", the encoded design has p = " +
                                          std::to_string(ds.p()));
                    }
                    rand = draw_randomization(RandomizationForm::explicit_omega, 0.0, Omega, rng, ds.n());
                } else {
                    double scale = 1.0;
                    const MatrixXd ref = randomization_reference(model, ds, &scale);
                    rand = draw_randomization(RandomizationForm::scaled_H, cfg.randomization_f(), ref, rng, ds.n());
                    rand.scale = scale;
                }
                PipelineOptions opts;
                opts.alpha = cfg.alpha;
                rep = post_gl_inference(model, ds, design.groups, penalty, rand, opts).report;
            } else if (m == Method::split) {
                auto rng = analysis_stream(cfg.seed, 2);
                const SplitPlan plan = SplitPlan::make(ds.n(), cfg.split_r, rng);
                BaselineOptions opts;
                opts.alpha = cfg.alpha;
                rep = data_splitting_inference(model, ds, design.groups, penalty, plan, opts);
            } else {
                BaselineOptions opts;
                opts.alpha = cfg.alpha;
                rep = naive_inference(model, ds, design.groups, penalty, opts);
            }
        } catch (const NumericalError& e) {
            rep = InferenceReport{};
            rep.method = m;
            rep.status = "failed";
            rep.message = e.what();
        }
        rep.seed = cfg.seed;
        rep.config = echo;
        back_transform(rep, design);
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::vector<std::string> write_report_files(const InferenceReport& report, const std::string& prefix) {
    const std::string base = prefix + "_" + std::string(to_string(report.method));
    write_text_file(base + ".json", to_json(report).dump(2) + "\n");
    write_text_file(base + "_coefficients.csv", coefficients_csv(report));
    write_text_file(base + "_groups.csv", groups_csv(report));
    return {base + ".json", base + "_coefficients.csv", base + "_groups.csv"};
}

}  // namespace postgl
