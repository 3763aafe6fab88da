#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "postgl/glasso.hpp"
#include "postgl/model.hpp"
#include "postgl/report.hpp"

namespace postgl {

/// Header plus raw string cells, one vector per data row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;
};

/// RFC 4180 style: commas, double-quoted fields, "" escapes, CRLF tolerated.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

/// Empty cells and NA / NaN / "." count as missing.
bool is_missing(const std::string& cell);

struct AnalysisConfig {
    std::string data_path;
    std::string response_column;
    LossKind model = LossKind::gaussian;
    /// Predictors; empty means every column except the response and `exclude`.
    std::vector<std::string> columns;
    std::vector<std::string> exclude;
    /// Columns to one-hot encode; each becomes one group unless relabelled.
    std::vector<std::string> categoricals;
    /// Source column -> group label. Unlisted columns get their own group.
    std::map<std::string, std::string> groups;
    bool full_one_hot = false;
    bool standardize = true;
    /// Unpenalised constant column for non-gaussian models (gaussian y is centred instead).
    bool intercept = true;
    double base_lambda = 1.0;
    /// When > 0, lambda_g = lambda * sqrt(|g|) replaces the default weights.
    double lambda = 0.0;
    /// Randomisation scale; when <= 0, f = (1 - split_r) / split_r.
    double f = 0.0;
    /// Optional p x p CSV with an explicit Omega (encoded column order).
    std::string omega_path;
    double alpha = 0.1;
    std::uint64_t seed = 1;
    /// post_gl, split, naive or all.
    std::string method = "all";
    double split_r = 0.67;
    std::string output_prefix = "postgl";

    double randomization_f() const { return f > 0.0 ? f : (1.0 - split_r) / split_r; }
    std::vector<Method> methods() const;
    void validate() const;
    nlohmann::json to_json() const;
    /// Throws ConfigError naming the offending field path.
    static AnalysisConfig from_json(const nlohmann::json& j);
};

/// Per-encoded-column preprocessing, kept for back-transformation.
struct ColumnTransform {
    std::string name;
    std::string source;
    bool categorical = false;
    double center = 0.0;
    double scale = 1.0;
};

struct EncodedDesign {
    Dataset ds;
    GroupStructure groups;
    std::vector<ColumnTransform> transforms;
    /// Categorical source column -> reference level.
    std::map<std::string, std::string> reference_levels;
    double response_center = 0.0;
    /// Group holding the unpenalised intercept column, or -1.
    int intercept_group = -1;

    nlohmann::json preprocessing_json() const;
};

/// Builds the design: drop-first (or full) one-hot for categoricals, every
/// column centred, continuous columns scaled to unit sd, gaussian responses
/// centred, and a trailing "(intercept)" column for non-gaussian models. Throws ConfigError on unknown columns or missing values (listing
/// the offending data rows, 1-based).
EncodedDesign encode(const CsvTable& table, const AnalysisConfig& cfg);

/// Maps estimates and interval ends back to the original column scales.
void back_transform(InferenceReport& report, const EncodedDesign& design);

/// Runs every requested method on one dataset. Randomisation and split come
/// from separate streams of `cfg.seed`, so `all` shares them across reports.
std::vector<InferenceReport> run_analysis(const AnalysisConfig& cfg, const EncodedDesign& design);

/// Writes <prefix>_<method>.json, _coefficients.csv and _groups.csv; returns the paths.
std::vector<std::string> write_report_files(const InferenceReport& report, const std::string& prefix);

MatrixXd read_matrix_csv(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace postgl
