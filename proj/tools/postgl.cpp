// Command-line driver: analyze a CSV, run a simulation study, or run the selftest.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "postgl/errors.hpp"
#include "postgl/io.hpp"
#include "postgl/selftest.hpp"
#include "postgl/sim.hpp"

namespace {

using namespace postgl;

struct AnalyzeFlags {
    std::string config;
    std::optional<std::string> data, response, model, omega, method, out;
    std::vector<std::string> columns, exclude, categoricals, group_pairs;
    bool full_one_hot = false, no_standardize = false, no_intercept = false;
    std::optional<double> base_lambda, lambda, f, alpha, split_r;
    std::optional<std::uint64_t> seed;
};

struct SimulateFlags {
    std::string config;
    std::optional<int> reps, n, threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

template <typename T>
void override(std::optional<T>& flag, T& field) {
    if (flag) field = *flag;
}

AnalysisConfig analysis_config(AnalyzeFlags& a) {
    AnalysisConfig cfg;
    if (!a.config.empty()) cfg = AnalysisConfig::from_json(nlohmann::json::parse(read_text_file(a.config)));
    override(a.data, cfg.data_path);
    override(a.response, cfg.response_column);
    if (a.model) cfg.model = loss_kind_from_string(*a.model);
    override(a.omega, cfg.omega_path);
    override(a.method, cfg.method);
    override(a.out, cfg.output_prefix);
    if (!a.columns.empty()) cfg.columns = a.columns;
    if (!a.exclude.empty()) cfg.exclude = a.exclude;
    if (!a.categoricals.empty()) cfg.categoricals = a.categoricals;
    for (const auto& pair : a.group_pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--group expects COLUMN=LABEL, got '" + pair + "'");
        cfg.groups[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    if (a.full_one_hot) cfg.full_one_hot = true;
    if (a.no_standardize) cfg.standardize = false;
    if (a.no_intercept) cfg.intercept = false;
    override(a.base_lambda, cfg.base_lambda);
    override(a.lambda, cfg.lambda);
    override(a.f, cfg.f);
    override(a.alpha, cfg.alpha);
    override(a.split_r, cfg.split_r);
    override(a.seed, cfg.seed);
    cfg.validate();
    return cfg;
}

int cmd_analyze(AnalyzeFlags& a) {
    const AnalysisConfig cfg = analysis_config(a);
    const EncodedDesign design = encode(read_csv(cfg.data_path), cfg);
    std::cout << "encoded design: n=" << design.ds.n() << " p=" << design.ds.p()
              << " groups=" << design.groups.num_groups() << "\n";
    bool failed = false;
    for (const auto& rep : run_analysis(cfg, design)) {
        const auto files = write_report_files(rep, cfg.output_prefix);
        std::cout << to_string(rep.method) << ": " << rep.status;
        if (rep.ok()) std::cout << ", " << rep.selected_groups.size() << " group(s) selected";
        if (!rep.message.empty()) std::cout << " (" << rep.message << ")";
        std::cout << " -> " << files.front() << "\n";
        failed = failed || rep.status == "failed";
    }
    return failed ? 2 : 0;
}

int cmd_simulate(SimulateFlags& s) {
    SimConfig cfg = SimConfig::from_json(nlohmann::json::parse(read_text_file(s.config)));
    override(s.reps, cfg.reps);
    override(s.n, cfg.n);
    override(s.seed, cfg.master_seed);
    cfg.validate();
    const std::string prefix = s.out ? *s.out : cfg.name;
    const SimResult res = run_study(cfg, s.threads ? *s.threads : 0);
    write_text_file(prefix + "_records.csv", records_csv(res));
    write_text_file(prefix + "_intervals.csv", intervals_csv(res));
    write_text_file(prefix + "_summary.json", result_json(res).dump(2) + "\n");
    const std::string table = summary_table(res);
    write_text_file(prefix + "_summary.txt", table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Post-selection inference after the randomised group lasso"};
    app.require_subcommand(1);

    AnalyzeFlags a;
    auto* analyze = app.add_subcommand("analyze", "Selective inference on a CSV dataset");
    analyze->add_option("-c,--config", a.config, "Analysis config (JSON); flags override its fields");
    analyze->add_option("--data", a.data, "CSV file with a header row");
    analyze->add_option("--response", a.response, "Response column");
    analyze->add_option("--model", a.model, "gaussian, logistic, poisson or quasi_poisson");
    analyze->add_option("--columns", a.columns, "Predictor columns (default: all but response/excluded)");
    analyze->add_option("--exclude", a.exclude, "Columns to drop");
    analyze->add_option("--categorical", a.categoricals, "Columns to one-hot encode");
    analyze->add_option("--group", a.group_pairs, "COLUMN=LABEL group assignment (repeatable)");
    analyze->add_flag("--full-one-hot", a.full_one_hot, "Keep every level instead of dropping the first");
    analyze->add_flag("--no-standardize", a.no_standardize, "Use columns as given");
    analyze->add_flag("--no-intercept", a.no_intercept, "Drop the unpenalised intercept of GLM fits");
    analyze->add_option("--base-lambda", a.base_lambda, "Multiplier of the default penalty weights");
    analyze->add_option("--lambda", a.lambda, "Explicit penalty: lambda_g = lambda * sqrt(|g|)");
    analyze->add_option("--f", a.f, "Randomisation scale (default (1 - r) / r)");
    analyze->add_option("--omega", a.omega, "CSV with an explicit randomisation covariance");
    analyze->add_option("--alpha", a.alpha, "Miscoverage level");
    analyze->add_option("--seed", a.seed, "Seed for randomisation and split");
    analyze->add_option("--method", a.method, "post_gl, split, naive or all");
    analyze->add_option("--split-r", a.split_r, "Selection fraction for data splitting");
    analyze->add_option("-o,--out", a.out, "Output prefix");

    SimulateFlags s;
    auto* simulate = app.add_subcommand("simulate", "Run a replicated simulation study");
    simulate->add_option("-c,--config", s.config, "Simulation config (JSON)")->required();
    simulate->add_option("--reps", s.reps, "Override the number of replications");
    simulate->add_option("--n", s.n, "Override the sample size");
    simulate->add_option("--seed", s.seed, "Override the master seed");
    simulate->add_option("--threads", s.threads, "Worker threads (default: POSTGL_THREADS or all cores)");
    simulate->add_option("-o,--out", s.out, "Output prefix (default: config name)");

    SelftestOptions t;
    auto* selftest = app.add_subcommand("selftest", "Run the fast invariant battery");
    selftest->add_flag("--inject-negative-lambda", t.inject_negative_lambda, "Corrupt one penalty weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(a);
        if (simulate->parsed()) return cmd_simulate(s);
        if (selftest->parsed()) {
            for (const auto& c : run_selftest(t, std::cout))
                if (!c.pass) return 2;
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid JSON: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
