#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "postgl/model.hpp"
#include "postgl/report.hpp"

namespace postgl {

enum class ResponseKind { gaussian, logistic, poisson, negbin };

std::string_view to_string(ResponseKind k);
ResponseKind response_kind_from_string(std::string_view name);
/// Loss used for analysis: negative binomial data are fitted by quasi-Poisson.
LossModel analysis_model(ResponseKind k);

struct SimConfig {
    std::string name = "study";
    int n = 500;
    /// Continuous AR(1) columns, grouped into consecutive blocks.
    int n_continuous = 120;
    int continuous_group_size = 4;
    /// Categorical variables, each uniform on `levels` levels.
    int n_discrete = 20;
    int levels = 5;
    /// Reference-level encoding (levels - 1 indicators) unless set.
    bool full_one_hot = false;
    ResponseKind response = ResponseKind::gaussian;
    double sigma = 5.0;
    double phi = 1.5;
    double tau = 0.1;
    /// Explicit coefficient magnitude; when <= 0, m = sqrt(2 tau log p).
    double signal = 0.0;
    int s_c = 3;
    int s_d = 2;
    double rho = 0.3;
    double base_lambda = 1.0;
    /// Randomisation scale; when <= 0, f = (1 - r) / r.
    double f = 0.0;
    double r = 0.67;
    int reps = 500;
    double alpha = 0.1;
    std::uint64_t master_seed = 1;
    /// Oracle-target sample size as a multiple of n.
    int oracle_factor = 50;
    bool run_split = true;
    bool run_naive = true;

    int p() const;
    int num_groups() const;
    double m() const;
    double randomization_f() const;
    void validate() const;

    nlohmann::json to_json() const;
    /// Throws ConfigError naming the offending field path.
    static SimConfig from_json(const nlohmann::json& j);
};

struct SimDesign {
    Dataset ds;
    GroupStructure groups;
    VectorXd beta;
    std::vector<int> true_groups;
};

GroupStructure sim_groups(const SimConfig& cfg);
/// Coefficient vector: magnitude m on every column of the first s_c
/// continuous and first s_d categorical groups.
VectorXd sim_beta(const SimConfig& cfg);
std::vector<int> sim_true_groups(const SimConfig& cfg);

MatrixXd generate_X(const SimConfig& cfg, int n, std::mt19937_64& rng);
VectorXd generate_response(const SimConfig& cfg, const MatrixXd& X, const VectorXd& beta, std::mt19937_64& rng);
SimDesign generate_design(const SimConfig& cfg, std::mt19937_64& rng);
SimDesign generate_design(const SimConfig& cfg, std::uint64_t seed);

/// Group-level F1; 1.0 when both sets are empty.
double f1_score(const std::vector<int>& selected, const std::vector<int>& truth);

struct MethodRecord {
    int rep = 0;
    Method method = Method::post_gl;
    std::string status;
    std::vector<int> selected_groups;
    int n_intervals = 0;
    int n_covered = 0;
    double coverage = 0.0;
    double mean_length = 0.0;
    double f1 = 0.0;
    /// Largest |entry| of the inverse Fisher information over its Lemma bound (post_gl only).
    double bound_ratio = 0.0;
    std::string message;
    double seconds = 0.0;
};

struct IntervalRecord {
    int rep = 0;
    Method method = Method::post_gl;
    int column = 0;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double target = 0.0;
    bool covered = false;
};

struct MethodSummary {
    Method method = Method::post_gl;
    int reps_ok = 0;
    int reps_empty = 0;
    int reps_failed = 0;
    int intervals = 0;
    /// Covered intervals over all intervals.
    double coverage = 0.0;
    /// Median and mean of per-replication coverage (replications with intervals).
    double median_coverage = 0.0;
    double mean_rep_coverage = 0.0;
    /// Mean over replications of the per-replication average length.
    double mean_length = 0.0;
    /// Mean over every interval.
    double pooled_length = 0.0;
    double mean_f1 = 0.0;
    int bound_violations = 0;
};

struct SimResult {
    SimConfig cfg;
    std::vector<MethodRecord> records;
    std::vector<IntervalRecord> intervals;
    std::vector<MethodSummary> summary;
    int oracle_failures = 0;
    double seconds = 0.0;

    const MethodSummary& summary_for(Method m) const;
};

/// Threads from POSTGL_THREADS (default: hardware concurrency) when `threads` is 0.
SimResult run_study(const SimConfig& cfg, int threads = 0);
std::vector<MethodSummary> summarize(const std::vector<MethodRecord>& records,
                                     const std::vector<IntervalRecord>& intervals);

/// Per-replication records, without timings so reruns are byte-identical.
std::string records_csv(const SimResult& r);
std::string intervals_csv(const SimResult& r);
/// Aggregates, timings and the configuration echo.
nlohmann::json result_json(const SimResult& r);
/// Plain-text table in the layout of the paper's coverage/F1/length table.
std::string summary_table(const SimResult& r);

}  // namespace postgl
