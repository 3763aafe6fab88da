#include <doctest.h>

#include <cmath>
#include <random>

#include "postgl/errors.hpp"
#include "postgl/sim.hpp"

using namespace postgl;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.n = 200;
    cfg.n_continuous = 24;
    cfg.n_discrete = 4;
    cfg.s_c = 2;
    cfg.s_d = 1;
    cfg.base_lambda = 0.5;
    cfg.reps = 4;
    cfg.oracle_factor = 10;
    cfg.master_seed = 77;
    return cfg;
}

double column_mean(const VectorXd& v) { return v.mean(); }

double column_var(const VectorXd& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1.0); }

std::string expect_config_error(const nlohmann::json& j) {
    try {
        SimConfig::from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("design dimensions and signal size") {
    SimConfig cfg;
    CHECK(cfg.p() == 200);
    CHECK(cfg.num_groups() == 50);
    CHECK(cfg.m() == doctest::Approx(std::sqrt(2.0 * 0.1 * std::log(200.0))).epsilon(1e-14));
    CHECK(cfg.m() == doctest::Approx(1.03).epsilon(1e-3));
    CHECK(cfg.randomization_f() == doctest::Approx(0.33 / 0.67));
    cfg.signal = 0.2;
    CHECK(cfg.m() == 0.2);

    const GroupStructure groups = sim_groups(cfg);
    CHECK(groups.size(0) == 4);
    CHECK(groups.size(30) == 4);
    CHECK(groups.label(0) == "c1");
    CHECK(groups.label(30) == "d1");
    const VectorXd beta = sim_beta(cfg);
    CHECK((beta.array() != 0.0).count() == 4 * (cfg.s_c + cfg.s_d));
    CHECK(sim_true_groups(cfg) == std::vector<int>{0, 1, 2, 30, 31});
}

TEST_CASE("covariates") {
    SimConfig cfg;
    cfg.rho = 0.0;
    cfg.n_continuous = 6;
    cfg.n_discrete = 3;
    std::mt19937_64 rng(1);
    const MatrixXd X = generate_X(cfg, 20000, rng);
    const MatrixXd C = X.leftCols(6);
    const MatrixXd S = C.transpose() * C / 20000.0;
    CHECK((S - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 0.04);

    cfg.full_one_hot = true;
    const MatrixXd F = generate_X(cfg, 500, rng);
    for (int d = 0; d < 3; ++d) {
        const VectorXd sums = F.middleCols(6 + 5 * d, 5).rowwise().sum();
        CHECK((sums.array() == 1.0).all());
    }
    cfg.full_one_hot = false;
    const MatrixXd D = generate_X(cfg, 500, rng);
    CHECK(D.cols() == 6 + 3 * 4);
    CHECK((D.rightCols(12).rowwise().sum().array() <= 3.0).all());

    cfg.rho = 0.3;
    const MatrixXd A = generate_X(cfg, 50000, rng).leftCols(6);
    const MatrixXd SA = A.transpose() * A / 50000.0;
    CHECK(SA(0, 1) == doctest::Approx(0.3).epsilon(0.1));
    CHECK(SA(0, 2) == doctest::Approx(0.09).epsilon(0.3));
}

TEST_CASE("responses at beta = 0") {
    SimConfig cfg;
    cfg.n_continuous = 2;
    cfg.n_discrete = 0;
    const int n = 100000;
    const MatrixXd X = MatrixXd::Zero(n, 2);
    const VectorXd beta = VectorXd::Zero(2);
    std::mt19937_64 rng(2);

    cfg.response = ResponseKind::gaussian;
    CHECK(std::sqrt(column_var(generate_response(cfg, X, beta, rng))) == doctest::Approx(5.0).epsilon(0.01));
    cfg.response = ResponseKind::logistic;
    CHECK(column_mean(generate_response(cfg, X, beta, rng)) == doctest::Approx(0.5).epsilon(0.01));
    cfg.response = ResponseKind::poisson;
    const VectorXd yp = generate_response(cfg, X, beta, rng);
    CHECK(column_var(yp) / column_mean(yp) == doctest::Approx(1.0).epsilon(0.03));
    cfg.response = ResponseKind::negbin;
    const VectorXd yn = generate_response(cfg, X, beta, rng);
    CHECK(column_mean(yn) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(column_var(yn) / column_mean(yn) == doctest::Approx(1.5).epsilon(0.03));

    CHECK(analysis_model(ResponseKind::negbin).kind == LossKind::quasi_poisson);
}

TEST_CASE("F1 score") {
    CHECK(f1_score({1, 2}, {1, 2}) == 1.0);
    CHECK(f1_score({3}, {1, 2}) == 0.0);
    CHECK(f1_score({1, 2, 5}, {1, 2, 7}) == doctest::Approx(2.0 / 3.0));
    CHECK(f1_score({}, {}) == 1.0);
    CHECK(f1_score({}, {1}) == 0.0);
}

TEST_CASE("config parsing") {
    const SimConfig cfg = small_config();
    const SimConfig back = SimConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());

    nlohmann::json j = cfg.to_json();
    j["reps"] = "many";
    CHECK(expect_config_error(j).find("'/reps'") != std::string::npos);
    CHECK(expect_config_error({{"nn", 3}}).find("'/nn'") != std::string::npos);
    CHECK(expect_config_error({{"response", "gamma"}}).find("'/response'") != std::string::npos);
    CHECK(expect_config_error({{"rho", 1.5}}).find("'/rho'") != std::string::npos);
    CHECK(expect_config_error({{"reps", 0}}).find("'/reps'") != std::string::npos);
}

TEST_CASE("studies are reproducible") {
    const SimConfig cfg = small_config();
    const SimResult a = run_study(cfg, 1);
    const SimResult b = run_study(cfg, 3);
    CHECK(records_csv(a) == records_csv(b));
    CHECK(intervals_csv(a) == intervals_csv(b));
    CHECK(a.records.size() == 3u * cfg.reps);
    SimConfig other = cfg;
    other.master_seed = 78;
    CHECK(records_csv(run_study(other, 1)) != records_csv(a));
}

TEST_CASE("null design covers at the nominal rate") {
    SimConfig cfg = small_config();
    cfg.s_c = 0;
    cfg.s_d = 0;
    cfg.base_lambda = 0.35;
    cfg.reps = 150;
    cfg.run_split = false;
    cfg.run_naive = false;
    const SimResult res = run_study(cfg);
    const MethodSummary& s = res.summary_for(Method::post_gl);
    REQUIRE(s.intervals >= 100);
    // Intervals within one replication are correlated; allow four pooled standard errors.
    const double se = std::sqrt(0.09 / s.intervals);
    CHECK(std::abs(s.coverage - 0.9) < 4.0 * se + 0.01);
    CHECK(res.oracle_failures == 0);
}

}  // TEST_SUITE
