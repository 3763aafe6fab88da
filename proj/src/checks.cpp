#include "postgl/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "postgl/errors.hpp"

namespace postgl {

namespace {

VectorXd draw_response(LossKind loss, const VectorXd& theta, std::mt19937_64& rng) {
    VectorXd y(theta.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < theta.size(); ++i) {
        const double t = theta(i);
        switch (loss) {
            case LossKind::gaussian: y(i) = t + normal(rng); break;
            case LossKind::logistic: {
                std::bernoulli_distribution coin(1.0 / (1.0 + std::exp(-t)));
                y(i) = coin(rng) ? 1.0 : 0.0;
                break;
            }
            case LossKind::poisson:
            case LossKind::quasi_poisson: {
                std::poisson_distribution<int> pois(std::exp(std::min(t, 5.0)));
                y(i) = pois(rng);
                break;
            }
        }
    }
    return y;
}

bool admissible(const GroupLassoSolution& sol, const InstanceOptions& o, int n) {
    if (sol.empty() || sol.degenerate || !sol.converged) return false;
    if (o.max_active_groups > 0 && static_cast<int>(sol.active_groups.size()) > o.max_active_groups) return false;
    if (o.max_active_columns > 0 && static_cast<int>(sol.E.size()) > o.max_active_columns) return false;
    return static_cast<int>(sol.E.size()) < n / 4;
}

double rel_max(const MatrixXd& diff, const MatrixXd& ref) {
    const double d = diff.cwiseAbs().maxCoeff();
    const double r = ref.size() ? ref.cwiseAbs().maxCoeff() : 0.0;
    return d / std::max(r, 1e-300);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// Shuffled layout: signal groups are placed at random positions.
std::vector<int> random_sizes(const InstanceOptions& o, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(o.min_group_size, o.max_group_size);
    std::vector<int> sizes(o.num_groups);
    for (int& s : sizes) s = size(rng);
    return sizes;
}

}  // namespace

std::optional<Instance> random_instance(const InstanceOptions& o, std::mt19937_64& rng) {
    Instance inst;
    inst.model.kind = o.loss;
    inst.groups = GroupStructure::contiguous(random_sizes(o, rng));
    const int p = inst.groups.num_columns();
    std::normal_distribution<double> normal(0.0, 1.0);
    inst.ds.X.resize(o.n, p);
    for (int i = 0; i < o.n; ++i)
        for (int j = 0; j < p; ++j) inst.ds.X(i, j) = normal(rng);
    const bool counts = o.loss == LossKind::poisson || o.loss == LossKind::quasi_poisson;
    // Count models keep the linear predictor moderate.
    const double scale = counts ? 0.25 : 1.0;
    VectorXd beta = VectorXd::Zero(p);
    std::uniform_int_distribution<int> pick(0, inst.groups.num_groups() - 1);
    for (int k = 0; k < 2; ++k) {
        for (int j : inst.groups.members(pick(rng))) beta(j) = scale * o.signal * (normal(rng) > 0 ? 1.0 : -1.0);
    }
    inst.ds.y = draw_response(o.loss, inst.ds.X * beta, rng);
    try {
        validate_dataset(inst.model, inst.ds);
    } catch (const ConfigError&) {
        return std::nullopt;
    }

    double ref_scale = 1.0;
    const MatrixXd ref = randomization_reference(inst.model, inst.ds, &ref_scale);
    inst.rand = draw_randomization(RandomizationForm::scaled_H, o.f, ref, rng, o.n);
    inst.rand.scale = ref_scale;

    double base = 0.6;
    bool found = false;
    for (int attempt = 0; attempt < 40 && !found; ++attempt) {
        inst.penalty = default_lambda(inst.ds, inst.groups, base);
        inst.sol = solve_group_lasso(inst.model, inst.ds, inst.groups, inst.penalty, inst.rand);
        if (admissible(inst.sol, o, o.n)) {
            found = true;
        } else if (inst.sol.empty()) {
            base *= 0.75;
        } else {
            base *= 1.2;
        }
    }
    if (!found) return std::nullopt;
    try {
        const VectorXd warm = inst.sol.beta(inst.sol.E);
        inst.fit = fit_restricted(inst.model, inst.ds, inst.groups, inst.sol.E, &warm);
        inst.prob = build_problem(inst.fit, inst.sol, inst.groups, inst.penalty, inst.rand, o.build);
    } catch (const NumericalError&) {
        return std::nullopt;
    }
    return inst;
}

void BoundTally::add(double max_inverse, double bound) {
    ++checked;
    const double ratio = max_inverse / bound;
    worst_ratio = std::max(worst_ratio, ratio);
    if (!(max_inverse <= bound)) ++violations;
}

void BoundTally::add(const SelectiveProblem&, const SelectiveFit& fit) {
    add(fit.fisher_inverse.cwiseAbs().maxCoeff(), fit.variance_bound);
}

namespace {

void tally_bound(BoundTally* tally, const SelectiveProblem& prob) {
    if (!tally) return;
    try {
        tally->add(prob, selective_inference(prob, 0.1));
    } catch (const NumericalError&) {
        // A failed fit has no Fisher information to bound; the suites report it separately.
    }
}

}  // namespace

std::vector<CheckResult> check_kkt(int count, std::uint64_t seed, BoundTally* tally) {
    CheckResult stat{"kkt_stationarity"}, znorm{"kkt_subgradient_norm"}, recon{"pi_reconstruction"};
    stat.tolerance = 1e-6;
    znorm.tolerance = 1e-8;
    recon.tolerance = 1e-8;
    std::mt19937_64 rng(seed);
    int produced = 0, attempts = 0;
    while (produced < count && attempts < 5 * count) {
        ++attempts;
        InstanceOptions o;
        o.n = 60 + static_cast<int>(rng() % 120);
        o.num_groups = 4 + static_cast<int>(rng() % 10);
        o.max_group_size = 4;
        o.f = 0.25 + (rng() % 1000) / 500.0;
        // The identity under test is the plain affine map, without the absorbed remainder.
        o.build.absorb_remainder = false;
        auto inst = random_instance(o, rng);
        if (!inst) continue;
        ++produced;

        stat.worst = std::max(stat.worst, kkt_stationarity(inst->model, inst->ds, inst->groups, inst->penalty,
                                                           inst->rand, inst->sol));
        for (const auto& z : inst->sol.z) znorm.worst = std::max(znorm.worst, z.norm() - 1.0);

        const SelectiveProblem& prob = inst->prob;
        IndexSet perm = prob.E;
        perm.insert(perm.end(), prob.Eprime.begin(), prob.Eprime.end());
        const VectorXd target = std::sqrt(static_cast<double>(prob.n)) * inst->rand.omega(perm);
        const VectorXd got = pi_map(prob, prob.beta_E_scaled, prob.gamma_scaled);
        const double err = (got - target).lpNorm<Eigen::Infinity>() /
                           std::max(target.lpNorm<Eigen::Infinity>(), 1e-300);
        recon.worst = std::max(recon.worst, err);
        tally_bound(tally, prob);
    }
    for (auto* c : {&stat, &znorm, &recon}) {
        c->instances = produced;
        c->skipped = attempts - produced;
        c->pass = produced == count && c->worst < c->tolerance;
        if (produced < count) c->detail = "only " + std::to_string(produced) + " admissible instances";
    }
    znorm.pass = produced == count && znorm.worst <= znorm.tolerance;
    return {stat, znorm, recon};
}

std::vector<CheckResult> check_jacobian(int count, std::uint64_t seed, BoundTally* tally) {
    CheckResult grad{"logJ_gradient_fd"}, hess{"logJ_hessian_fd"}, single{"logJ_singletons_zero"};
    grad.tolerance = 1e-5;
    hess.tolerance = 1e-5;
    single.tolerance = 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> stretch(0.5, 2.0);
    const LossKind kinds[] = {LossKind::gaussian, LossKind::logistic, LossKind::poisson};
    int produced = 0, attempts = 0, mixed = 0;
    while (produced < count && attempts < 6 * count) {
        ++attempts;
        InstanceOptions o;
        o.loss = kinds[attempts % 3];
        o.n = 150 + static_cast<int>(rng() % 150);
        o.num_groups = 5 + static_cast<int>(rng() % 6);
        o.min_group_size = 1;
        o.max_group_size = attempts % 4 == 0 ? 1 : 4;
        auto inst = random_instance(o, rng);
        if (!inst) continue;
        ++produced;
        const SelectiveProblem& prob = inst->prob;
        const bool singletons_only =
            std::all_of(prob.active_sizes.begin(), prob.active_sizes.end(), [](int s) { return s == 1; });
        if (singletons_only) {
            const double lj = log_jacobian(prob, prob.gamma_scaled);
            single.instances++;
            single.worst = std::max(single.worst, std::abs(lj));
            if (lj != 0.0) single.pass = false;
        } else {
            ++mixed;
        }
        // Evaluate at a perturbed point so the check is not tied to the observed gamma.
        VectorXd g = prob.gamma_scaled;
        for (int k = 0; k < g.size(); ++k) g(k) = std::max(g(k), 0.5) * stretch(rng);
        const VectorXd an_g = grad_log_jacobian(prob, g);
        const MatrixXd an_h = hess_log_jacobian(prob, g);
        VectorXd fd_g(g.size());
        MatrixXd fd_h(g.size(), g.size());
        for (int k = 0; k < g.size(); ++k) {
            // Richardson-extrapolated central differences.
            const double h = 1e-3 * std::max(1.0, g(k));
            auto central = [&](double step) {
                VectorXd gp = g, gm = g;
                gp(k) += step;
                gm(k) -= step;
                return std::make_pair((log_jacobian(prob, gp) - log_jacobian(prob, gm)) / (2 * step),
                                      VectorXd((grad_log_jacobian(prob, gp) - grad_log_jacobian(prob, gm)) / (2 * step)));
            };
            const auto [d1, v1] = central(h);
            const auto [d2, v2] = central(h / 2);
            fd_g(k) = (4 * d2 - d1) / 3;
            fd_h.col(k) = (4 * v2 - v1) / 3;
        }
        const double scale_g = std::max(an_g.lpNorm<Eigen::Infinity>(), 1e-300);
        const double scale_h = std::max(an_h.cwiseAbs().maxCoeff(), 1e-300);
        if (an_g.lpNorm<Eigen::Infinity>() > 0.0) {
            grad.worst = std::max(grad.worst, (fd_g - an_g).lpNorm<Eigen::Infinity>() / scale_g);
            hess.worst = std::max(hess.worst, (fd_h - an_h).cwiseAbs().maxCoeff() / scale_h);
        }
        tally_bound(tally, prob);
    }
    for (auto* c : {&grad, &hess}) {
        c->instances = produced;
        c->skipped = attempts - produced;
        c->pass = produced == count && mixed > 0 && c->worst < c->tolerance;
        c->detail = std::to_string(mixed) + " instances with a multi-column active group";
    }
    single.skipped = attempts - produced;
    if (single.instances == 0) {
        single.pass = false;
        single.detail = "no singleton-only selection was generated";
    }
    return {grad, hess, single};
}

double gstar_bisection(const SelectiveProblem& prob, const VectorXd& b_scaled, double tol) {
    if (prob.num_active_groups() != 1) throw ConfigError("bisection applies to one active group only");
    const double c = prob.barrier_c;
    const double mu = (prob.A_bar * b_scaled + prob.b_bar)(0);
    const double w = prob.Omega_bar_inv(0, 0);
    auto deriv = [&](double x) {
        VectorXd g(1);
        g(0) = x;
        return w * (x - mu) - grad_log_jacobian(prob, g)(0) + grad_barrier(g, c)(0);
    };
    double lo = c + 1e-12;
    double hi = std::max(c + 1.0, mu) + 1.0;
    while (deriv(hi) < 0.0) hi = c + 2.0 * (hi - c);
    while (deriv(lo) > 0.0 && lo - c > 1e-300) lo = c + 0.5 * (lo - c);
    for (int it = 0; it < 400 && hi - lo > tol * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (deriv(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<CheckResult> check_mle_oracle(int count, std::uint64_t seed, BoundTally* tally) {
    CheckResult mle{"mle_vs_bruteforce"}, fisher{"fisher_vs_fd_hessian"}, bis{"gstar_vs_bisection"};
    mle.tolerance = 1e-4;
    fisher.tolerance = 1e-3;
    bis.tolerance = 1e-10;
    std::mt19937_64 rng(seed);
    const LossKind kinds[] = {LossKind::gaussian, LossKind::logistic, LossKind::poisson};
    int produced = 0, attempts = 0, failures = 0;
    while (produced < count && attempts < 8 * count) {
        ++attempts;
        InstanceOptions o;
        o.loss = kinds[attempts % 3];
        o.n = 100 + static_cast<int>(rng() % 200);
        o.num_groups = 4 + static_cast<int>(rng() % 5);
        o.max_group_size = 3;
        o.max_active_columns = 3;
        o.f = 0.5 + (rng() % 1000) / 1000.0;
        auto inst = random_instance(o, rng);
        if (!inst) continue;
        ++produced;
        const SelectiveProblem& prob = inst->prob;
        try {
            const SelectiveFit fit = selective_inference(prob, 0.1);
            const BruteForceMle bf = brute_force_mle(prob);
            const double mle_err = (fit.mle - bf.mle).lpNorm<Eigen::Infinity>() /
                                   std::max(1.0, fit.mle.lpNorm<Eigen::Infinity>());
            mle.worst = std::max(mle.worst, mle_err);
            fisher.worst = std::max(fisher.worst, rel_max(fit.fisher - bf.fisher, fit.fisher));
            if (prob.num_active_groups() == 1) {
                const double gb = gstar_bisection(prob, prob.beta_E_scaled);
                bis.instances++;
                bis.worst = std::max(bis.worst, std::abs(gb - fit.gstar(0)) / std::max(1.0, std::abs(gb)));
            }
            if (tally) tally->add(prob, fit);
        } catch (const NumericalError& e) {
            ++failures;
            mle.detail = std::string("failure: ") + e.what();
        }
    }
    for (auto* c : {&mle, &fisher}) {
        c->instances = produced;
        c->skipped = attempts - produced;
        c->pass = produced == count && failures == 0 && c->worst < c->tolerance;
    }
    bis.skipped = attempts - produced;
    bis.pass = bis.instances > 0 && failures == 0 && bis.worst < bis.tolerance;
    if (bis.instances == 0) bis.detail = "no single-group selection was generated";
    if (failures) fisher.detail = std::to_string(failures) + " numerical failures";
    return {mle, fisher, bis};
}

CheckResult check_shortcut(int count, std::uint64_t seed, BoundTally* tally) {
    CheckResult res{"shortcut_vs_general"};
    res.tolerance = 1e-10;
    std::mt19937_64 rng(seed);
    const LossKind kinds[] = {LossKind::gaussian, LossKind::logistic, LossKind::poisson};
    int produced = 0, attempts = 0;
    while (produced < count && attempts < 6 * count) {
        ++attempts;
        InstanceOptions o;
        o.loss = kinds[attempts % 3];
        o.n = 100 + static_cast<int>(rng() % 200);
        o.num_groups = 4 + static_cast<int>(rng() % 8);
        o.max_group_size = 4;
        auto inst = random_instance(o, rng);
        if (!inst) continue;
        // Omega = f H at the refit, so the closed forms apply exactly.
        const double f = 0.25 + (rng() % 1000) / 400.0;
        RandomizationSpec rand = inst->rand;
        rand.Omega = f * inst->fit.moments.H;
        SelectiveProblem prob;
        try {
            prob = build_problem(inst->fit, inst->sol, inst->groups, inst->penalty, rand);
        } catch (const NumericalError&) {
            continue;
        }
        ++produced;
        const ConditionalParams gen = general_conditional_params(prob);
        const ConditionalParams sc = shortcut_conditional_params(prob, f);
        double err = rel_max(gen.A_bar - sc.A_bar, gen.A_bar);
        err = std::max(err, rel_max(gen.Omega_bar - sc.Omega_bar, gen.Omega_bar));
        const double bscale = std::max(gen.b_bar.lpNorm<Eigen::Infinity>(), 1.0);
        err = std::max(err, (gen.b_bar - sc.b_bar).lpNorm<Eigen::Infinity>() / bscale);
        res.worst = std::max(res.worst, err);
        tally_bound(tally, prob);
    }
    res.instances = produced;
    res.skipped = attempts - produced;
    res.pass = produced == count && res.worst < res.tolerance;
    res.detail = "worst relative max-norm gap " + fmt(res.worst);
    return res;
}

}  // namespace postgl
