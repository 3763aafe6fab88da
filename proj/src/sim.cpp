#include "postgl/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "postgl/baselines.hpp"
#include "postgl/errors.hpp"
#include "postgl/pipeline.hpp"

namespace postgl {

std::string_view to_string(ResponseKind k) {
    switch (k) {
        case ResponseKind::gaussian: return "gaussian";
        case ResponseKind::logistic: return "logistic";
        case ResponseKind::poisson: return "poisson";
        case ResponseKind::negbin: return "negbin";
    }
    return "unknown";
}

ResponseKind response_kind_from_string(std::string_view name) {
    if (name == "gaussian") return ResponseKind::gaussian;
    if (name == "logistic") return ResponseKind::logistic;
    if (name == "poisson") return ResponseKind::poisson;
    if (name == "negbin" || name == "negative_binomial") return ResponseKind::negbin;
    throw ConfigError("unknown response family '" + std::string(name) + "'");
}

LossModel analysis_model(ResponseKind k) {
    LossModel m;
    switch (k) {
        case ResponseKind::gaussian: m.kind = LossKind::gaussian; break;
        case ResponseKind::logistic: m.kind = LossKind::logistic; break;
        case ResponseKind::poisson: m.kind = LossKind::poisson; break;
        case ResponseKind::negbin: m.kind = LossKind::quasi_poisson; break;
    }
    return m;
}

namespace {

int indicators_per_variable(const SimConfig& cfg) { return cfg.full_one_hot ? cfg.levels : cfg.levels - 1; }

int num_continuous_groups(const SimConfig& cfg) {
    return (cfg.n_continuous + cfg.continuous_group_size - 1) / cfg.continuous_group_size;
}

}  // namespace

int SimConfig::p() const { return n_continuous + n_discrete * indicators_per_variable(*this); }

int SimConfig::num_groups() const { return num_continuous_groups(*this) + n_discrete; }

double SimConfig::m() const { return signal > 0.0 ? signal : std::sqrt(2.0 * tau * std::log(static_cast<double>(p()))); }

double SimConfig::randomization_f() const { return f > 0.0 ? f : (1.0 - r) / r; }

void SimConfig::validate() const {
    auto require = [](bool ok, const std::string& field, const std::string& what) {
        if (!ok) throw ConfigError("simulation config: field '/" + field + "' " + what);
    };
    require(n >= 10, "n", "must be at least 10");
    require(n_continuous >= 0, "n_continuous", "must be non-negative");
    require(continuous_group_size >= 1, "continuous_group_size", "must be positive");
    require(n_discrete >= 0, "n_discrete", "must be non-negative");
    require(levels >= 2, "levels", "must be at least 2");
    require(p() >= 1, "n_continuous", "and n_discrete leave no columns");
    require(sigma > 0.0, "sigma", "must be positive");
    require(phi > 1.0 || response != ResponseKind::negbin, "phi", "must exceed 1 for negative binomial data");
    require(tau >= 0.0, "tau", "must be non-negative");
    require(s_c >= 0 && s_c <= num_continuous_groups(*this), "s_c", "exceeds the number of continuous groups");
    require(s_d >= 0 && s_d <= n_discrete, "s_d", "exceeds the number of categorical variables");
    require(rho > -1.0 && rho < 1.0, "rho", "must lie in (-1, 1)");
    require(base_lambda > 0.0, "base_lambda", "must be positive");
    require(f >= 0.0, "f", "must be non-negative");
    require(r > 0.0 && r < 1.0, "r", "must lie in (0, 1)");
    require(reps >= 1, "reps", "must be positive");
    require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0, 1)");
    require(oracle_factor >= 1, "oracle_factor", "must be positive");
}

nlohmann::json SimConfig::to_json() const {
    return {{"name", name},
            {"n", n},
            {"n_continuous", n_continuous},
            {"continuous_group_size", continuous_group_size},
            {"n_discrete", n_discrete},
            {"levels", levels},
            {"full_one_hot", full_one_hot},
            {"response", std::string(to_string(response))},
            {"sigma", sigma},
            {"phi", phi},
            {"tau", tau},
            {"signal", signal},
            {"s_c", s_c},
            {"s_d", s_d},
            {"rho", rho},
            {"base_lambda", base_lambda},
            {"f", f},
            {"r", r},
            {"reps", reps},
            {"alpha", alpha},
            {"master_seed", master_seed},
            {"oracle_factor", oracle_factor},
            {"run_split", run_split},
            {"run_naive", run_naive},
            {"derived", {{"p", p()}, {"m", m()}, {"randomization_f", randomization_f()}}}};
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
        ok = v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
        ok = v.is_string();
    } else if constexpr (std::is_integral_v<T>) {
        ok = v.is_number_integer() || v.is_number_unsigned();
    } else {
        ok = v.is_number();
    }
    if (!ok) throw ConfigError(std::string("simulation config: field '/") + key + "' has the wrong type");
    out = v.get<T>();
}

}  // namespace

SimConfig SimConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("simulation config: top level must be an object");
    static const std::vector<std::string> known = {
        "name", "n", "n_continuous", "continuous_group_size", "n_discrete", "levels", "full_one_hot", "response",
        "sigma", "phi", "tau", "signal", "s_c", "s_d", "rho", "base_lambda", "f", "r", "reps", "alpha",
        "master_seed", "oracle_factor", "run_split", "run_naive", "derived"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("simulation config: unknown field '/" + key + "'");
        }
    }
    SimConfig c;
    read_field(j, "name", c.name);
    read_field(j, "n", c.n);
    read_field(j, "n_continuous", c.n_continuous);
    read_field(j, "continuous_group_size", c.continuous_group_size);
    read_field(j, "n_discrete", c.n_discrete);
    read_field(j, "levels", c.levels);
    read_field(j, "full_one_hot", c.full_one_hot);
    std::string response(to_string(c.response));
    read_field(j, "response", response);
    try {
        c.response = response_kind_from_string(response);
    } catch (const ConfigError&) {
        throw ConfigError("simulation config: field '/response' has unknown value '" + response + "'");
    }
    read_field(j, "sigma", c.sigma);
    read_field(j, "phi", c.phi);
    read_field(j, "tau", c.tau);
    read_field(j, "signal", c.signal);
    read_field(j, "s_c", c.s_c);
    read_field(j, "s_d", c.s_d);
    read_field(j, "rho", c.rho);
    read_field(j, "base_lambda", c.base_lambda);
    read_field(j, "f", c.f);
    read_field(j, "r", c.r);
    read_field(j, "reps", c.reps);
    read_field(j, "alpha", c.alpha);
    read_field(j, "master_seed", c.master_seed);
    read_field(j, "oracle_factor", c.oracle_factor);
    read_field(j, "run_split", c.run_split);
    read_field(j, "run_naive", c.run_naive);
    c.validate();
    return c;
}

GroupStructure sim_groups(const SimConfig& cfg) {
    std::vector<IndexSet> groups;
    std::vector<std::string> labels;
    int col = 0;
    const int gc = num_continuous_groups(cfg);
    for (int g = 0; g < gc; ++g) {
        IndexSet members;
        for (int k = 0; k < cfg.continuous_group_size && col < cfg.n_continuous; ++k) members.push_back(col++);
        groups.push_back(members);
        labels.push_back("c" + std::to_string(g + 1));
    }
    const int per = indicators_per_variable(cfg);
    for (int d = 0; d < cfg.n_discrete; ++d) {
        IndexSet members;
        for (int k = 0; k < per; ++k) members.push_back(col++);
        groups.push_back(members);
        labels.push_back("d" + std::to_string(d + 1));
    }
    return GroupStructure(std::move(groups), std::move(labels));
}

std::vector<int> sim_true_groups(const SimConfig& cfg) {
    std::vector<int> out;
    for (int g = 0; g < cfg.s_c; ++g) out.push_back(g);
    const int gc = num_continuous_groups(cfg);
    for (int d = 0; d < cfg.s_d; ++d) out.push_back(gc + d);
    return out;
}

VectorXd sim_beta(const SimConfig& cfg) {
    const GroupStructure groups = sim_groups(cfg);
    VectorXd beta = VectorXd::Zero(cfg.p());
    const double m = cfg.m();
    for (int g : sim_true_groups(cfg))
        for (int j : groups.members(g)) beta(j) = m;
    return beta;
}

MatrixXd generate_X(const SimConfig& cfg, int n, std::mt19937_64& rng) {
    MatrixXd X = MatrixXd::Zero(n, cfg.p());
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> level(1, cfg.levels);
    const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
    const int per = indicators_per_variable(cfg);
    for (int i = 0; i < n; ++i) {
        // Stationary AR(1): unit variances and Corr(x_j, x_k) = rho^|j-k|.
        double prev = 0.0;
        for (int j = 0; j < cfg.n_continuous; ++j) {
            const double z = normal(rng);
            prev = j == 0 ? z : cfg.rho * prev + innov * z;
            X(i, j) = prev;
        }
        for (int d = 0; d < cfg.n_discrete; ++d) {
            const int l = level(rng);
            const int base = cfg.n_continuous + d * per;
            if (cfg.full_one_hot) {
                X(i, base + l - 1) = 1.0;
            } else if (l > 1) {
                X(i, base + l - 2) = 1.0;
            }
        }
    }
    return X;
}

VectorXd generate_response(const SimConfig& cfg, const MatrixXd& X, const VectorXd& beta, std::mt19937_64& rng) {
    const VectorXd theta = X * beta;
    const int n = static_cast<int>(X.rows());
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double t = theta(i);
        switch (cfg.response) {
            case ResponseKind::gaussian: {
                std::normal_distribution<double> noise(0.0, cfg.sigma);
                y(i) = t + noise(rng);
                break;
            }
            case ResponseKind::logistic: {
                const double prob = 1.0 / (1.0 + std::exp(-t));
                std::bernoulli_distribution coin(prob);
                y(i) = coin(rng) ? 1.0 : 0.0;
                break;
            }
            case ResponseKind::poisson:
            case ResponseKind::negbin: {
                if (t > 40.0) throw OverflowError("simulated mean exp(x'beta) overflows at row " + std::to_string(i), i);
                double mu = std::exp(t);
                if (cfg.response == ResponseKind::negbin) {
                    // Gamma-Poisson mixture: E[Y] = mu, Var[Y] = phi mu.
                    std::gamma_distribution<double> gamma(mu / (cfg.phi - 1.0), cfg.phi - 1.0);
                    mu = gamma(rng);
                }
                std::poisson_distribution<long long> pois(mu);
                y(i) = mu > 0.0 ? static_cast<double>(pois(rng)) : 0.0;
                break;
            }
        }
    }
    return y;
}

SimDesign generate_design(const SimConfig& cfg, std::mt19937_64& rng) {
    SimDesign d;
    d.groups = sim_groups(cfg);
    d.beta = sim_beta(cfg);
    d.true_groups = sim_true_groups(cfg);
    d.ds.X = generate_X(cfg, cfg.n, rng);
    d.ds.y = generate_response(cfg, d.ds.X, d.beta, rng);
    for (int j = 0; j < cfg.p(); ++j) d.ds.column_names.push_back("x" + std::to_string(j + 1));
    return d;
}

SimDesign generate_design(const SimConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return generate_design(cfg, rng);
}

double f1_score(const std::vector<int>& selected, const std::vector<int>& truth) {
    if (selected.empty() && truth.empty()) return 1.0;
    int tp = 0;
    for (int g : selected)
        if (std::find(truth.begin(), truth.end(), g) != truth.end()) ++tp;
    const int fp = static_cast<int>(selected.size()) - tp;
    const int fn = static_cast<int>(truth.size()) - tp;
    return tp / (tp + 0.5 * (fp + fn));
}

const MethodSummary& SimResult::summary_for(Method m) const {
    for (const auto& s : summary)
        if (s.method == m) return s;
    throw ConfigError("no summary for method " + std::string(to_string(m)));
}

namespace {

std::mt19937_64 stream_for(std::uint64_t master, std::uint64_t index, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(master & 0xffffffffu), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index & 0xffffffffu), static_cast<std::uint32_t>(index >> 32), tag};
    return std::mt19937_64(seq);
}

/// Population targets b*_E, approximated by refitting on one large
/// independent sample shared by every replication of the study.
class OracleTargets {
public:
    OracleTargets(const SimConfig& cfg) : cfg_(cfg), model_(analysis_model(cfg.response)) {}

    struct Target {
        std::optional<VectorXd> value;
        std::string error;
    };

    Target target(const IndexSet& E) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ensure_data();
            auto it = cache_.find(E);
            if (it != cache_.end()) return it->second;
        }
        Target t;
        try {
            NewtonOptions opts;
            opts.tol = 1e-9;
            t.value = newton_refit(model_, data_, E, nullptr, opts).beta_E;
        } catch (const Error& e) {
            t.error = e.what();
        }
        std::lock_guard<std::mutex> lock(mu_);
        if (cache_.emplace(E, t).second && !t.value) ++failures_;
        return t;
    }

    int failures() const { return failures_; }

private:
    void ensure_data() {
        if (ready_) return;
        auto rng = stream_for(cfg_.master_seed, 0, 0x6f72u);
        const SimConfig& c = cfg_;
        data_.X = generate_X(c, c.n * c.oracle_factor, rng);
        data_.y = generate_response(c, data_.X, sim_beta(c), rng);
        ready_ = true;
    }

    const SimConfig& cfg_;
    LossModel model_;
    Dataset data_;
    bool ready_ = false;
    std::mutex mu_;
    std::map<IndexSet, Target> cache_;
    int failures_ = 0;
};

struct RepOutput {
    std::vector<MethodRecord> records;
    std::vector<IntervalRecord> intervals;
};

void score_report(const InferenceReport& rep, int r, const SimDesign& d, OracleTargets& oracle, RepOutput& out,
                  MethodRecord& rec) {
    rec.status = rep.status;
    rec.message = rep.message;
    rec.selected_groups = rep.selected_group_ids;
    rec.f1 = f1_score(rep.selected_group_ids, d.true_groups);
    if (!rep.ok()) return;
    const auto oracle_target = oracle.target(rep.E);
    if (!oracle_target.value) {
        rec.status = "oracle_failed";
        rec.message = "oracle target refit failed: " + oracle_target.error;
        return;
    }
    const VectorXd& target = *oracle_target.value;
    double total_length = 0.0;
    for (std::size_t k = 0; k < rep.coefficients.size(); ++k) {
        const auto& c = rep.coefficients[k];
        IntervalRecord iv;
        iv.rep = r;
        iv.method = rep.method;
        iv.column = c.column;
        iv.estimate = c.estimate;
        iv.lower = c.lower;
        iv.upper = c.upper;
        iv.target = target(static_cast<int>(k));
        iv.covered = iv.lower <= iv.target && iv.target <= iv.upper;
        rec.n_covered += iv.covered ? 1 : 0;
        total_length += c.upper - c.lower;
        out.intervals.push_back(iv);
    }
    rec.n_intervals = static_cast<int>(rep.coefficients.size());
    if (rec.n_intervals > 0) {
        rec.coverage = static_cast<double>(rec.n_covered) / rec.n_intervals;
        rec.mean_length = total_length / rec.n_intervals;
    }
}

RepOutput run_replication(const SimConfig& cfg, int r, OracleTargets& oracle) {
    RepOutput out;
    auto rng = stream_for(cfg.master_seed, static_cast<std::uint64_t>(r) + 1, 0x7265u);
    const LossModel model = analysis_model(cfg.response);

    SimDesign d;
    std::string design_error;
    try {
        d = generate_design(cfg, rng);
    } catch (const Error& e) {
        design_error = e.what();
    }

    std::vector<Method> methods{Method::post_gl};
    if (cfg.run_split) methods.push_back(Method::split);
    if (cfg.run_naive) methods.push_back(Method::naive);

    std::optional<Penalty> penalty;
    if (design_error.empty()) {
        try {
            penalty = default_lambda(d.ds, d.groups, cfg.base_lambda);
        } catch (const Error& e) {
            design_error = e.what();
        }
    }

    for (Method m : methods) {
        MethodRecord rec;
        rec.rep = r;
        rec.method = m;
        const auto t0 = std::chrono::steady_clock::now();
        if (!design_error.empty()) {
            rec.status = "failed";
            rec.message = design_error;
            out.records.push_back(rec);
            continue;
        }
        try {
            InferenceReport rep;
            if (m == Method::post_gl) {
                double scale = 1.0;
                const MatrixXd ref = randomization_reference(model, d.ds, &scale);
                RandomizationSpec rand =
                    draw_randomization(RandomizationForm::scaled_H, cfg.randomization_f(), ref, rng, cfg.n);
                rand.scale = scale;
                PipelineOptions opts;
                opts.alpha = cfg.alpha;
                rep = post_gl_inference(model, d.ds, d.groups, *penalty, rand, opts).report;
                if (rep.ok() && rep.variance_bound > 0.0) rec.bound_ratio = rep.max_inverse_fisher / rep.variance_bound;
            } else if (m == Method::split) {
                const SplitPlan plan = SplitPlan::make(cfg.n, cfg.r, rng);
                BaselineOptions opts;
                opts.alpha = cfg.alpha;
                rep = data_splitting_inference(model, d.ds, d.groups, *penalty, plan, opts);
            } else {
                BaselineOptions opts;
                opts.alpha = cfg.alpha;
                rep = naive_inference(model, d.ds, d.groups, *penalty, opts);
            }
            score_report(rep, r, d, oracle, out, rec);
        } catch (const Error& e) {
            rec.status = "failed";
            rec.message = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.records.push_back(rec);
    }
    return out;
}

int thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("POSTGL_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) return t;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

std::vector<MethodSummary> summarize(const std::vector<MethodRecord>& records,
                                     const std::vector<IntervalRecord>& intervals) {
    std::vector<MethodSummary> out;
    for (Method m : {Method::post_gl, Method::split, Method::naive}) {
        MethodSummary s;
        s.method = m;
        std::vector<double> rep_cov;
        double len_sum = 0.0, f1_sum = 0.0;
        int len_count = 0, f1_count = 0;
        bool any = false;
        for (const auto& r : records) {
            if (r.method != m) continue;
            any = true;
            if (r.status == "failed" || r.status == "oracle_failed") {
                ++s.reps_failed;
                continue;
            }
            f1_sum += r.f1;
            ++f1_count;
            if (r.status == "nothing_selected") {
                ++s.reps_empty;
                continue;
            }
            ++s.reps_ok;
            if (r.bound_ratio > 1.0) ++s.bound_violations;
            if (r.n_intervals > 0) {
                rep_cov.push_back(r.coverage);
                len_sum += r.mean_length;
                ++len_count;
            }
        }
        if (!any) continue;
        int covered = 0;
        double pooled = 0.0;
        for (const auto& iv : intervals) {
            if (iv.method != m) continue;
            ++s.intervals;
            covered += iv.covered ? 1 : 0;
            pooled += iv.upper - iv.lower;
        }
        s.coverage = s.intervals ? static_cast<double>(covered) / s.intervals : 0.0;
        s.pooled_length = s.intervals ? pooled / s.intervals : 0.0;
        s.median_coverage = median(rep_cov);
        double acc = 0.0;
        for (double c : rep_cov) acc += c;
        s.mean_rep_coverage = rep_cov.empty() ? 0.0 : acc / rep_cov.size();
        s.mean_length = len_count ? len_sum / len_count : 0.0;
        s.mean_f1 = f1_count ? f1_sum / f1_count : 0.0;
        out.push_back(s);
    }
    return out;
}

SimResult run_study(const SimConfig& cfg, int threads) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    OracleTargets oracle(cfg);
    std::vector<RepOutput> outputs(cfg.reps);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < cfg.reps; r = next++) outputs[r] = run_replication(cfg, r, oracle);
    };
    const int nt = std::min(thread_count(threads), cfg.reps);
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SimResult res;
    res.cfg = cfg;
    for (auto& o : outputs) {
        res.records.insert(res.records.end(), o.records.begin(), o.records.end());
        res.intervals.insert(res.intervals.end(), o.intervals.begin(), o.intervals.end());
    }
    res.summary = summarize(res.records, res.intervals);
    res.oracle_failures = oracle.failures();
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

namespace {

std::string csv_text(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

}  // namespace

std::string records_csv(const SimResult& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "rep,method,status,selected_groups,n_intervals,n_covered,coverage,mean_length,f1,bound_ratio,message\n";
    for (const auto& rec : r.records) {
        std::string groups;
        for (std::size_t k = 0; k < rec.selected_groups.size(); ++k) {
            groups += (k ? ";" : "") + std::to_string(rec.selected_groups[k]);
        }
        os << rec.rep << ',' << to_string(rec.method) << ',' << rec.status << ',' << groups << ',' << rec.n_intervals
           << ',' << rec.n_covered << ',' << rec.coverage << ',' << rec.mean_length << ',' << rec.f1 << ','
           << rec.bound_ratio << ',' << csv_text(rec.message) << '\n';
    }
    return os.str();
}

std::string intervals_csv(const SimResult& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "rep,method,column,estimate,lower,upper,target,covered\n";
    for (const auto& iv : r.intervals) {
        os << iv.rep << ',' << to_string(iv.method) << ',' << iv.column << ',' << iv.estimate << ',' << iv.lower << ','
           << iv.upper << ',' << iv.target << ',' << (iv.covered ? 1 : 0) << '\n';
    }
    return os.str();
}

nlohmann::json result_json(const SimResult& r) {
    nlohmann::json j;
    j["config"] = r.cfg.to_json();
    j["oracle_failures"] = r.oracle_failures;
    j["seconds"] = r.seconds;
    auto& methods = j["methods"] = nlohmann::json::object();
    for (const auto& s : r.summary) {
        methods[std::string(to_string(s.method))] = {{"reps_ok", s.reps_ok},
                                                     {"reps_empty", s.reps_empty},
                                                     {"reps_failed", s.reps_failed},
                                                     {"intervals", s.intervals},
                                                     {"coverage", s.coverage},
                                                     {"median_coverage", s.median_coverage},
                                                     {"mean_rep_coverage", s.mean_rep_coverage},
                                                     {"mean_length", s.mean_length},
                                                     {"pooled_length", s.pooled_length},
                                                     {"mean_f1", s.mean_f1},
                                                     {"bound_violations", s.bound_violations}};
    }
    double total = 0.0;
    std::map<std::string, double> per_method;
    for (const auto& rec : r.records) {
        total += rec.seconds;
        per_method[std::string(to_string(rec.method))] += rec.seconds;
    }
    j["timings"] = {{"method_seconds", per_method}, {"sum_seconds", total}};
    return j;
}

std::string summary_table(const SimResult& r) {
    std::ostringstream os;
    auto get = [&](Method m) -> const MethodSummary* {
        for (const auto& s : r.summary)
            if (s.method == m) return &s;
        return nullptr;
    };
    const auto* post = get(Method::post_gl);
    const auto* split = get(Method::split);
    const auto* naive = get(Method::naive);
    auto cell = [&](const MethodSummary* s, double MethodSummary::*field) {
        std::ostringstream c;
        if (s) {
            c << std::fixed << std::setprecision(3) << s->*field;
        } else {
            c << "-";
        }
        return c.str();
    };
    os << "study: " << r.cfg.name << " (" << to_string(r.cfg.response) << ", reps=" << r.cfg.reps << ")\n";
    os << std::left << std::setw(6) << "n" << std::setw(30) << "| mean coverage" << std::setw(22) << "| F1-score"
       << "| mean interval length\n";
    os << std::setw(6) << "" << std::setw(10) << "| naive" << std::setw(10) << "split" << std::setw(10) << "post_gl"
       << std::setw(11) << "| split" << std::setw(11) << "post_gl" << std::setw(11) << "| split" << "post_gl\n";
    os << std::setw(6) << r.cfg.n << "| " << std::setw(8) << cell(naive, &MethodSummary::coverage) << std::setw(10)
       << cell(split, &MethodSummary::coverage) << std::setw(10) << cell(post, &MethodSummary::coverage) << "| "
       << std::setw(9) << cell(split, &MethodSummary::mean_f1) << std::setw(11) << cell(post, &MethodSummary::mean_f1)
       << "| " << std::setw(9) << cell(split, &MethodSummary::mean_length) << cell(post, &MethodSummary::mean_length)
       << "\n";
    os << "failures: ";
    for (const auto& s : r.summary) os << to_string(s.method) << "=" << s.reps_failed << " ";
    os << "oracle=" << r.oracle_failures << "\n";
    os << "empty selections: ";
    for (const auto& s : r.summary) os << to_string(s.method) << "=" << s.reps_empty << " ";
    os << "\n";
    return os.str();
}

}  // namespace postgl
