#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "helpers.hpp"
#include "postgl/checks.hpp"
#include "postgl/errors.hpp"
#include "postgl/selective.hpp"

using namespace postgl;
using testutil::dataset;

namespace {

/// One active group of size 2 with H_EE = I and Lambda = lambda I, so J(g) = g + lambda.
SelectiveProblem scalar_problem(double lambda, double omega_bar, double mu) {
    SelectiveProblem p;
    p.n = 100;
    p.active_groups = {0};
    p.active_sizes = {2};
    p.jacobian_offset = MatrixXd::Constant(1, 1, lambda);
    p.jacobian_blocks = {{0, 1}};
    p.A_bar = MatrixXd::Zero(1, 2);
    p.b_bar = VectorXd::Constant(1, mu);
    p.Omega_bar = MatrixXd::Constant(1, 1, omega_bar);
    p.Omega_bar_inv = MatrixXd::Constant(1, 1, 1.0 / omega_bar);
    p.gamma_scaled = VectorXd::Constant(1, 1.0);
    p.barrier_c = 0.0;
    return p;
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Nelder-Mead with restarts; returns the best point found.
VectorXd nelder_mead(const std::function<double(const VectorXd&)>& f, VectorXd x0, double step) {
    const int d = static_cast<int>(x0.size());
    for (int restart = 0; restart < 8; ++restart) {
        std::vector<VectorXd> s(d + 1, x0);
        for (int k = 0; k < d; ++k) s[k + 1](k) += step;
        std::vector<double> fs(d + 1);
        for (int k = 0; k <= d; ++k) fs[k] = f(s[k]);
        for (int it = 0; it < 4000; ++it) {
            std::vector<int> order(d + 1);
            for (int k = 0; k <= d; ++k) order[k] = k;
            std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
            const int best = order[0], worst = order[d], second = order[d - 1];
            VectorXd centroid = VectorXd::Zero(d);
            for (int k = 0; k < d; ++k) centroid += s[order[k]] / d;
            const VectorXd xr = centroid + (centroid - s[worst]);
            const double fr = f(xr);
            if (fr < fs[best]) {
                const VectorXd xe = centroid + 2.0 * (centroid - s[worst]);
                const double fe = f(xe);
                if (fe < fr) s[worst] = xe, fs[worst] = fe;
                else s[worst] = xr, fs[worst] = fr;
            } else if (fr < fs[second]) {
                s[worst] = xr, fs[worst] = fr;
            } else {
                const VectorXd xc = centroid + 0.5 * (s[worst] - centroid);
                const double fc = f(xc);
                if (fc < fs[worst]) {
                    s[worst] = xc, fs[worst] = fc;
                } else {
                    for (int k = 0; k <= d; ++k) {
                        if (k == best) continue;
                        s[k] = s[best] + 0.5 * (s[k] - s[best]);
                        fs[k] = f(s[k]);
                    }
                }
            }
        }
        x0 = s[std::min_element(fs.begin(), fs.end()) - fs.begin()];
        step *= 0.1;
    }
    return x0;
}

double safe(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
    try {
        const double v = f(x);
        return std::isfinite(v) ? v : 1e300;
    } catch (const Error&) {
        return 1e300;
    }
}

Instance instance_with(int active_groups, LossKind loss, std::uint64_t seed, int max_group_size = 3,
                       int min_group_size = 1) {
    std::mt19937_64 rng(seed);
    InstanceOptions opts;
    opts.loss = loss;
    opts.min_group_size = min_group_size;
    opts.max_group_size = max_group_size;
    opts.max_active_groups = active_groups;
    for (int tries = 0; tries < 500; ++tries) {
        auto inst = random_instance(opts, rng);
        if (inst && inst->prob.num_active_groups() == active_groups) return std::move(*inst);
    }
    FAIL("no instance with the requested number of active groups");
    return {};
}

/// sqrt(n) omega in the permuted order [E ; E'].
VectorXd permuted_omega(const Instance& inst) {
    IndexSet order = inst.prob.E;
    order.insert(order.end(), inst.prob.Eprime.begin(), inst.prob.Eprime.end());
    return std::sqrt(static_cast<double>(inst.ds.n())) * inst.rand.omega(order);
}

}  // namespace

TEST_SUITE("selective") {

TEST_CASE("orthogonal completion") {
    std::mt19937_64 rng(2);
    for (int d : {1, 2, 5}) {
        VectorXd u = testutil::gaussian_matrix(d, 1, rng).col(0);
        u.normalize();
        const MatrixXd Q = orthogonal_completion(u);
        CHECK(Q.rows() == d);
        CHECK(Q.cols() == d - 1);
        if (d > 1) {
            CHECK(testutil::rel_err(MatrixXd(Q.transpose() * Q), MatrixXd::Identity(d - 1, d - 1)) < 1e-12);
            CHECK((Q.transpose() * u).norm() < 1e-12);
        }
    }
}

TEST_CASE("barrier") {
    CHECK(barrier(VectorXd::Constant(3, 1.5), 0.5) == doctest::Approx(3.0 * std::log(2.0)));
    CHECK(barrier(VectorXd::Constant(2, 1e12), 0.0) < 1e-11);
    CHECK_THROWS_AS(barrier(VectorXd::Constant(1, 0.5), 0.5), DomainError);
    const VectorXd v = (VectorXd(3) << 0.3, 1.7, 4.0).finished();
    const double c = 0.1;
    const auto f = [&](const VectorXd& x) { return barrier(x, c); };
    CHECK(testutil::rel_err(grad_barrier(v, c), testutil::fd_gradient(f, v, 1e-6)) < 1e-7);
    VectorXd fd_diag(3);
    for (int k = 0; k < 3; ++k) {
        const auto gk = [&](const VectorXd& x) { return grad_barrier(x, c)(k); };
        fd_diag(k) = testutil::fd_gradient(gk, v, 1e-6)(k);
    }
    CHECK(testutil::rel_err(hess_barrier(v, c), fd_diag) < 1e-7);
}

TEST_CASE("Jacobian closed forms") {
    const double lambda = 0.7;
    const SelectiveProblem p = scalar_problem(lambda, 1.0, 0.0);
    const VectorXd g = VectorXd::Constant(1, 2.5);
    CHECK(log_jacobian(p, g) == doctest::Approx(std::log(2.5 + lambda)));
    CHECK(grad_log_jacobian(p, g)(0) == doctest::Approx(1.0 / (2.5 + lambda)));
    CHECK(hess_log_jacobian(p, g)(0, 0) == doctest::Approx(-1.0 / ((2.5 + lambda) * (2.5 + lambda))));

    const Instance singles = instance_with(2, LossKind::gaussian, 5, 1);
    const VectorXd gs = singles.prob.gamma_scaled;
    CHECK(log_jacobian(singles.prob, gs) == 0.0);
    CHECK(grad_log_jacobian(singles.prob, gs).norm() == 0.0);
    CHECK(hess_log_jacobian(singles.prob, gs).norm() == 0.0);
}

TEST_CASE("Jacobian derivatives against finite differences") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const Instance inst = instance_with(2, LossKind::gaussian, seed, 3);
        const VectorXd g = inst.prob.gamma_scaled;
        const auto f = [&](const VectorXd& x) { return log_jacobian(inst.prob, x); };
        CHECK(testutil::rel_err(grad_log_jacobian(inst.prob, g), testutil::fd_gradient(f, g, 1e-4)) < 1e-6);
        MatrixXd fd(2, 2);
        for (int k = 0; k < 2; ++k) {
            const auto gk = [&](const VectorXd& x) { return grad_log_jacobian(inst.prob, x)(k); };
            fd.row(k) = testutil::fd_gradient(gk, g, 1e-4).transpose();
        }
        CHECK(testutil::rel_err(hess_log_jacobian(inst.prob, g), fd) < 1e-5);
    }
}

TEST_CASE("Jacobian determinant against the full change of variables") {
    // The active block of the map, H_EE beta + Lambda_E u with beta_g = g_a u_g, differentiated in
    // (g, tangent coordinates of each u_g), has determinant det(H_EE) J(g).
    const Instance inst = instance_with(2, LossKind::gaussian, 31, 3, 2);
    const SelectiveProblem& p = inst.prob;
    const int d = p.dim_E();
    const int G = p.num_active_groups();
    const auto active_block = [&](const VectorXd& x) {
        VectorXd beta(d), unit(d);
        int col = 0, off = 0;
        for (int a = 0; a < G; ++a) {
            const int s = p.active_sizes[a];
            const VectorXd u = p.u_stack.segment(col, s);
            VectorXd dir = u;
            if (s > 1) dir = u + orthogonal_completion(u) * x.segment(G + off, s - 1);
            dir.normalize();
            unit.segment(col, s) = dir;
            beta.segment(col, s) = x(a) * dir;
            col += s;
            off += s - 1;
        }
        return VectorXd(p.H_EE * beta + p.lambda_E.cwiseProduct(unit));
    };
    VectorXd x0 = VectorXd::Zero(d);
    x0.head(G) = p.gamma_scaled;
    MatrixXd jac(d, d);
    const double h = 1e-6;
    for (int k = 0; k < d; ++k) {
        VectorXd xp = x0, xm = x0;
        xp(k) += h;
        xm(k) -= h;
        jac.col(k) = (active_block(xp) - active_block(xm)) / (2.0 * h);
    }
    const double numeric = std::log(std::abs(jac.determinant())) - std::log(p.H_EE.determinant());
    REQUIRE(d > G);
    CHECK(numeric == doctest::Approx(log_jacobian(p, p.gamma_scaled)).epsilon(1e-6));
}

TEST_CASE("g* in the scalar case") {
    const double lambda = 0.6, omega_bar = 0.8, mu = 1.3;
    const SelectiveProblem p = scalar_problem(lambda, omega_bar, mu);
    const auto res = solve_gstar(p, VectorXd::Zero(2));
    const auto deriv = [&](double g) { return (g - mu) / omega_bar - 1.0 / (g + lambda) - 1.0 / (g * (g + 1.0)); };
    const double root = bisect(deriv, 1e-12, 100.0);
    CHECK(std::abs(res.g(0) - root) < 1e-10);

    // Tiny Omega_bar: the quadratic term pins g* to the mean.
    const SelectiveProblem tight = scalar_problem(lambda, 1e-8, 5.0);
    CHECK(solve_gstar(tight, VectorXd::Zero(2)).g(0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("g* against a derivative-free minimiser") {
    const Instance inst = instance_with(3, LossKind::gaussian, 77, 2);
    const VectorXd b = inst.prob.beta_E_scaled;
    const auto res = solve_gstar(inst.prob, b);
    const auto f = [&](const VectorXd& g) { return safe([&](const VectorXd& x) { return gstar_objective(inst.prob, b, x); }, g); };
    const VectorXd nm = nelder_mead(f, inst.prob.gamma_scaled, 0.5);
    CHECK(std::abs(f(res.g) - f(nm)) < 1e-6);
    CHECK(f(res.g) <= f(nm) + 1e-9);
}

TEST_CASE("conditional parameters for orthonormal singletons") {
    // H = I, all singletons, Omega = f I: A_bar = diag(u), Omega_bar = f I, b_bar = -lambda.
    const int n = 64;
    std::mt19937_64 rng(3);
    const Eigen::HouseholderQR<MatrixXd> qr(testutil::gaussian_matrix(n, 2, rng));
    const MatrixXd X = MatrixXd(qr.householderQ() * MatrixXd::Identity(n, 2)) * std::sqrt(double(n));
    const VectorXd y = X * (VectorXd(2) << 3.0, -2.0).finished() + 0.1 * testutil::gaussian_matrix(n, 1, rng).col(0);
    const Dataset ds = dataset(X, y);
    const GroupStructure groups = GroupStructure::singletons(2);
    const Penalty pen{VectorXd::Constant(2, 0.5)};
    const double f = 0.4;
    const auto rand = draw_randomization(RandomizationForm::explicit_omega, 0.0, f * MatrixXd::Identity(2, 2), 9u, n);
    LossModel gauss;
    const auto sol = solve_group_lasso(gauss, ds, groups, pen, rand);
    REQUIRE(sol.active_groups.size() == 2);
    const auto fit = fit_restricted(gauss, ds, groups, sol.E);
    const auto prob = build_problem(fit, sol, groups, pen, rand);
    const MatrixXd signs = prob.u_stack.asDiagonal();
    CHECK(testutil::rel_err(prob.A_bar, signs) < 1e-12);
    CHECK(testutil::rel_err(prob.Omega_bar, MatrixXd(f * MatrixXd::Identity(2, 2))) < 1e-12);
    CHECK(testutil::rel_err(prob.b_bar, VectorXd(VectorXd::Constant(2, -0.5))) < 1e-12);
}

TEST_CASE("change of variables reproduces the randomisation") {
    SUBCASE("quadratic loss is exact") {
        for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
            std::mt19937_64 rng(seed);
            InstanceOptions opts;
            opts.build.absorb_remainder = false;
            auto inst = random_instance(opts, rng);
            REQUIRE(inst);
            const VectorXd target = permuted_omega(*inst);
            const VectorXd pi = pi_map(inst->prob, inst->prob.beta_E_scaled, inst->prob.gamma_scaled);
            CHECK(testutil::rel_err(pi, target) < 1e-8);
        }
    }
    SUBCASE("logistic remainder is small at n = 2000") {
        std::mt19937_64 rng(44);
        InstanceOptions opts;
        opts.loss = LossKind::logistic;
        opts.n = 2000;
        opts.signal = 0.5;
        opts.build.absorb_remainder = false;
        auto inst = random_instance(opts, rng);
        REQUIRE(inst);
        const VectorXd target = permuted_omega(*inst);
        const VectorXd pi = pi_map(inst->prob, inst->prob.beta_E_scaled, inst->prob.gamma_scaled);
        CHECK((pi - target).lpNorm<Eigen::Infinity>() < 0.1 * target.norm());

        BuildOptions absorb;
        const auto exact = build_problem(inst->fit, inst->sol, inst->groups, inst->penalty, inst->rand, absorb);
        const VectorXd pi2 = pi_map(exact, exact.beta_E_scaled, exact.gamma_scaled);
        CHECK(testutil::rel_err(pi2, target) < 1e-10);
    }
}

TEST_CASE("selective MLE properties") {
    SUBCASE("sign flip of an active singleton flips its estimate") {
        const Instance inst = instance_with(2, LossKind::gaussian, 19, 1);
        const SelectiveFit base = selective_inference(inst.prob, 0.1);
        const int j = inst.prob.E[0];
        Dataset ds = inst.ds;
        ds.X.col(j) *= -1.0;
        RandomizationSpec rand = inst.rand;
        rand.omega(j) *= -1.0;
        rand.Omega.row(j) *= -1.0;
        rand.Omega.col(j) *= -1.0;
        const auto sol = solve_group_lasso(inst.model, ds, inst.groups, inst.penalty, rand);
        REQUIRE(sol.E == inst.prob.E);
        const auto fit = fit_restricted(inst.model, ds, inst.groups, sol.E);
        const auto prob = build_problem(fit, sol, inst.groups, inst.penalty, rand);
        const SelectiveFit flipped = selective_inference(prob, 0.1);
        CHECK(flipped.mle(0) == doctest::Approx(-base.mle(0)).epsilon(1e-8));
        CHECK(flipped.mle(1) == doctest::Approx(base.mle(1)).epsilon(1e-8));
    }
    SUBCASE("near-certain selection needs no correction") {
        std::mt19937_64 rng(5);
        const int n = 400;
        const MatrixXd X = testutil::gaussian_matrix(n, 4, rng);
        const VectorXd y = X * (VectorXd(4) << 20.0, -15.0, 0.0, 0.0).finished() + testutil::gaussian_matrix(n, 1, rng).col(0);
        const Dataset ds = dataset(X, y);
        const GroupStructure groups = GroupStructure::contiguous({2, 2});
        const Penalty pen{VectorXd::Constant(2, 100.0)};
        LossModel gauss;
        const auto rand = draw_randomization(RandomizationForm::scaled_H, 1.0, randomization_reference(gauss, ds), 8u, n);
        const auto sol = solve_group_lasso(gauss, ds, groups, pen, rand);
        REQUIRE(sol.active_groups == std::vector<int>{0});
        const auto fit = fit_restricted(gauss, ds, groups, sol.E);
        const auto prob = build_problem(fit, sol, groups, pen, rand);
        const SelectiveFit sf = selective_inference(prob, 0.1);
        const VectorXd sd = fit.Sigma_E.diagonal().cwiseSqrt() / std::sqrt(double(n));
        CHECK(((sf.mle - fit.beta_E).array() / sd.array()).abs().maxCoeff() < 0.05);
        CHECK(testutil::rel_err(MatrixXd(sf.fisher_inverse * n), fit.Sigma_E) < 0.05);
    }
    SUBCASE("inverse information respects the variance bound") {
        BoundTally tally;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            InstanceOptions opts;
            opts.max_group_size = 3;
            auto inst = random_instance(opts, rng);
            if (!inst) continue;
            tally.add(inst->prob, selective_inference(inst->prob, 0.1));
        }
        CHECK(tally.checked >= 15);
        CHECK(tally.violations == 0);
    }
}

TEST_CASE("brute-force likelihood") {
    const Instance inst = instance_with(2, LossKind::gaussian, 23, 1);
    const SelectiveFit sf = selective_inference(inst.prob, 0.1);
    const double sqrt_n = std::sqrt(double(inst.prob.n));
    const VectorXd t = sf.mle * sqrt_n;

    SUBCASE("score vanishes at the MLE") {
        const auto f = [&](const VectorXd& x) { return brute_force_loglik(inst.prob, x); };
        CHECK(testutil::fd_gradient(f, t, 1e-4).lpNorm<Eigen::Infinity>() < 1e-5);
    }
    SUBCASE("concave along random lines through the MLE") {
        std::mt19937_64 rng(8);
        const double f0 = brute_force_loglik(inst.prob, t);
        for (int k = 0; k < 5; ++k) {
            VectorXd dir = testutil::gaussian_matrix(2, 1, rng).col(0).normalized();
            double prev_slope = 1e300;
            for (double s = -1.0; s <= 1.0; s += 0.25) {
                const double a = brute_force_loglik(inst.prob, t + s * dir);
                const double b = brute_force_loglik(inst.prob, t + (s + 0.25) * dir);
                const double slope = (b - a) / 0.25;
                CHECK(slope <= prev_slope + 1e-7);
                prev_slope = slope;
                CHECK(a <= f0 + 1e-9);
            }
        }
    }
    SUBCASE("shortcut and general builds give the same inner infimum") {
        BuildOptions general;
        general.allow_shortcut = false;
        const auto prob2 = build_problem(inst.fit, inst.sol, inst.groups, inst.penalty, inst.rand, general);
        REQUIRE(inst.prob.used_shortcut);
        REQUIRE_FALSE(prob2.used_shortcut);
        const double a = brute_force_inner(inst.prob, t).value;
        const double b = brute_force_inner(prob2, t).value;
        CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("Wald inference") {
    VectorXd est(3);
    est << 0.0, 1.0, -2.0;
    const MatrixXd cov = MatrixXd::Identity(3, 3) * 0.25;
    const WaldResult w = wald_inference(est, cov, {1, 2}, 0.1);
    CHECK((w.upper(1) - w.estimate(1)) / w.std_error(1) == doctest::Approx(1.6449).epsilon(1e-4));
    CHECK(w.pvalue(0) == doctest::Approx(1.0));
    CHECK(w.pvalue(2) < w.pvalue(1));
    CHECK(w.group_df == std::vector<int>{1, 2});
    CHECK(w.group_stat(1) == doctest::Approx((1.0 + 4.0) / 0.25));
    CHECK((w.upper - w.lower).allFinite());
    CHECK_THROWS_AS(wald_inference(est, cov, {1, 1}, 0.1), ConfigError);
    CHECK_THROWS_AS(wald_inference(est, cov, {3}, 1.5), ConfigError);
}

}  // TEST_SUITE
