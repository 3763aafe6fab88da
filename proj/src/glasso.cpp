#include "postgl/glasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "postgl/errors.hpp"
#include "postgl/linalg.hpp"

namespace postgl {

void Penalty::validate(const GroupStructure& groups, bool allow_zero) const {
    if (lambda.size() != groups.num_groups()) {
        throw ConfigError("penalty has " + std::to_string(lambda.size()) + " weights for " +
                          std::to_string(groups.num_groups()) + " groups");
    }
    for (int g = 0; g < lambda.size(); ++g) {
        const double l = lambda(g);
        if (!std::isfinite(l) || l < 0.0 || (l == 0.0 && !allow_zero)) {
            throw ConfigError("penalty weight for group '" + groups.label(g) + "' must be positive, got " +
                              std::to_string(l));
        }
    }
}

namespace {

double sample_variance(const VectorXd& y) {
    const double mean = y.mean();
    return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

}  // namespace

Penalty default_lambda(const Dataset& ds, const GroupStructure& groups, double base_lambda) {
    if (!(base_lambda > 0.0)) throw ConfigError("base_lambda must be positive");
    if (ds.n() < 2) throw ConfigError("need at least two observations");
    const double var_y = sample_variance(ds.y);
    if (!(var_y > 0.0)) throw ConfigError("degenerate response: zero sample variance");
    const double n = ds.n();
    const double p = ds.p();
    const double log_term = p > 1 ? 2.0 * std::log(p) : 2.0 * std::log(2.0);
    const double mean_size = groups.mean_group_size();
    Penalty pen;
    pen.lambda.resize(groups.num_groups());
    for (int g = 0; g < groups.num_groups(); ++g) {
        const double unnormalised = base_lambda * std::sqrt(groups.size(g) / mean_size * n * var_y * log_term);
        pen.lambda(g) = unnormalised / std::sqrt(n);
    }
    return pen;
}

MatrixXd randomization_reference(const LossModel& model, const Dataset& ds, double* scale) {
    const double n = ds.n();
    const double ybar = ds.y.mean();
    double w = 1.0;
    double s = 1.0;
    switch (model.kind) {
        case LossKind::gaussian:
            s = sample_variance(ds.y);
            w = 1.0;
            break;
        case LossKind::logistic: w = std::max(ybar * (1.0 - ybar), 1e-4); break;
        case LossKind::poisson:
        case LossKind::quasi_poisson: w = std::max(ybar, 1e-4); break;
    }
    if (scale) *scale = s;
    MatrixXd H = (ds.X.transpose() * ds.X) * (w * s / n);
    return linalg::symmetrize(H);
}

namespace {

RandomizationSpec make_spec(RandomizationForm form, double f, const MatrixXd& H_or_Omega) {
    if (H_or_Omega.rows() != H_or_Omega.cols()) throw ConfigError("randomisation matrix must be square");
    RandomizationSpec spec;
    spec.form = form;
    if (form == RandomizationForm::scaled_H) {
        if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("randomisation scale f must be non-negative");
        spec.f = f;
        MatrixXd H = linalg::symmetrize(H_or_Omega);
        const int p = static_cast<int>(H.rows());
        if (p > 0 && linalg::lambda_min(H) < 1e-10) {
            H.diagonal().array() += 1e-8 * H.trace() / p;
            spec.ridge_repaired = true;
        }
        spec.Omega = f * H;
        if (f > 0.0 && p > 0 && linalg::lambda_min(spec.Omega) <= 0.0) {
            throw DomainError("randomisation covariance is not positive definite after ridge repair");
        }
    } else {
        spec.f = 1.0;
        spec.Omega = linalg::symmetrize(H_or_Omega);
        linalg::checked_llt(spec.Omega, "explicit randomisation covariance");
    }
    return spec;
}

void fill_draw(RandomizationSpec& spec, std::mt19937_64& rng, int n) {
    const int p = static_cast<int>(spec.Omega.rows());
    spec.omega = VectorXd::Zero(p);
    if (spec.form == RandomizationForm::scaled_H && spec.f == 0.0) return;
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd xi(p);
    for (int j = 0; j < p; ++j) xi(j) = normal(rng);
    spec.omega = linalg::sym_sqrt(spec.Omega) * xi / std::sqrt(static_cast<double>(n));
}

}  // namespace

RandomizationSpec draw_randomization(RandomizationForm form, double f, const MatrixXd& H_or_Omega,
                                     std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    RandomizationSpec spec = draw_randomization(form, f, H_or_Omega, rng, n);
    spec.seed = seed;
    return spec;
}

RandomizationSpec draw_randomization(RandomizationForm form, double f, const MatrixXd& H_or_Omega,
                                     std::mt19937_64& rng, int n) {
    if (n < 1) throw ConfigError("sample size must be positive");
    RandomizationSpec spec = make_spec(form, f, H_or_Omega);
    fill_draw(spec, rng, n);
    return spec;
}

RandomizationSpec no_randomization(int p) {
    RandomizationSpec spec;
    spec.form = RandomizationForm::scaled_H;
    spec.f = 0.0;
    spec.Omega = MatrixXd::Zero(p, p);
    spec.omega = VectorXd::Zero(p);
    return spec;
}

VectorXd group_soft_threshold(const VectorXd& v, double threshold) {
    const double norm = v.norm();
    if (norm <= threshold) return VectorXd::Zero(v.size());
    return (1.0 - threshold / norm) * v;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Smooth part (1/sqrt(n)) l(X beta) - sqrt(n) omega' beta, evaluated
/// through the linear predictor so that X beta is formed once.
class SmoothPart {
public:
    SmoothPart(const LossModel& model, const Dataset& ds, const VectorXd& omega)
        : model_(model), ds_(ds), omega_(omega), sqrt_n_(std::sqrt(static_cast<double>(ds.n()))) {}

    double sqrt_n() const { return sqrt_n_; }

    /// +inf when exp(theta) would overflow; lets line searches back off.
    double value(const VectorXd& beta) const { return value_theta(ds_.X * beta, beta); }

    double value_theta(const VectorXd& theta, const VectorXd& beta) const {
        double total = 0.0;
        const bool count = model_.kind == LossKind::poisson || model_.kind == LossKind::quasi_poisson;
        for (int i = 0; i < ds_.n(); ++i) {
            if (count && theta(i) > 700.0) return kInf;
            total += model_.rho(theta(i), ds_.y(i));
        }
        if (!std::isfinite(total)) return kInf;
        return total / sqrt_n_ - sqrt_n_ * omega_.dot(beta);
    }

    VectorXd grad(const VectorXd& beta, double* value_out = nullptr) const {
        const VectorXd theta = ds_.X * beta;
        if (value_out) *value_out = value_theta(theta, beta);
        VectorXd r(ds_.n());
        for (int i = 0; i < ds_.n(); ++i) r(i) = model_.drho(theta(i), ds_.y(i));
        return ds_.X.transpose() * r / sqrt_n_ - sqrt_n_ * omega_;
    }

    VectorXd weights(const VectorXd& beta) const {
        const VectorXd theta = ds_.X * beta;
        VectorXd w(ds_.n());
        for (int i = 0; i < ds_.n(); ++i) w(i) = model_.d2rho(theta(i));
        return w;
    }

private:
    const LossModel& model_;
    const Dataset& ds_;
    const VectorXd& omega_;
    double sqrt_n_;
};

double penalty_value(const GroupStructure& groups, const Penalty& pen, const VectorXd& beta) {
    double total = 0.0;
    for (int g = 0; g < groups.num_groups(); ++g) total += pen.lambda(g) * beta(groups.members(g)).norm();
    return total;
}

VectorXd prox(const GroupStructure& groups, const Penalty& pen, const VectorXd& v, double step) {
    VectorXd out(v.size());
    for (int g = 0; g < groups.num_groups(); ++g) {
        const auto& idx = groups.members(g);
        out(idx) = group_soft_threshold(v(idx), step * pen.lambda(g));
    }
    return out;
}

/// Largest eigenvalue of X'X / sqrt(n) by power iteration.
double initial_lipschitz(const LossModel& model, const Dataset& ds) {
    VectorXd v = VectorXd::Ones(ds.p()) / std::sqrt(static_cast<double>(ds.p()));
    double ev = 1.0;
    for (int it = 0; it < 30; ++it) {
        VectorXd w = ds.X.transpose() * (ds.X * v);
        ev = w.norm();
        if (ev == 0.0) break;
        v = w / ev;
    }
    double curvature = 1.0;
    if (model.kind == LossKind::logistic) curvature = 0.25;
    if (model.kind == LossKind::poisson || model.kind == LossKind::quasi_poisson) {
        curvature = std::max(ds.y.mean(), 1e-3);
    }
    return std::max(ev * curvature / std::sqrt(static_cast<double>(ds.n())), 1e-12);
}

struct PhaseResult {
    VectorXd beta;
    double objective = kInf;
    double residual = kInf;
    int iterations = 0;
    bool converged = false;
};

PhaseResult run_fista(const SmoothPart& smooth, const GroupStructure& groups, const Penalty& pen,
                      const VectorXd& start, double L0, const SolverOptions& opts, int budget,
                      std::vector<double>* trace) {
    PhaseResult res;
    VectorXd x = start;
    double fx = smooth.value(x);
    if (!std::isfinite(fx)) {
        x.setZero();
        fx = smooth.value(x);
    }
    double Fx = fx + penalty_value(groups, pen, x);
    if (trace) trace->push_back(Fx);
    VectorXd y = x;
    double t = 1.0;
    double L = L0;
    int small_steps = 0;

    for (int k = 0; k < budget; ++k) {
        res.iterations = k + 1;
        double fy = 0.0;
        const VectorXd gy = smooth.grad(y, &fy);
        VectorXd xn;
        double fxn = kInf;
        for (int bt = 0; bt < 80; ++bt) {
            xn = prox(groups, pen, y - gy / L, 1.0 / L);
            fxn = smooth.value(xn);
            const VectorXd d = xn - y;
            const double model_val = fy + gy.dot(d) + 0.5 * L * d.squaredNorm();
            if (fxn <= model_val + 1e-12 * std::abs(model_val)) break;
            L *= 2.0;
        }
        const double residual = L * (xn - y).lpNorm<Eigen::Infinity>();
        const double Fn = fxn + penalty_value(groups, pen, xn);
        if (!(Fn <= Fx)) {
            // Function-value restart: drop momentum and retake the step from x.
            if (t == 1.0 && (y - x).squaredNorm() == 0.0) {
                res.converged = residual < 1e-6;
                res.residual = residual;
                break;
            }
            y = x;
            t = 1.0;
            continue;
        }
        const double change = Fx - Fn;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = xn + ((t - 1.0) / t_next) * (xn - x);
        x = xn;
        Fx = Fn;
        t = t_next;
        L = std::max(L * 0.95, 1e-12);
        if (trace) trace->push_back(Fx);
        res.residual = residual;
        small_steps = change <= opts.tol * std::max(1.0, std::abs(Fx)) ? small_steps + 1 : 0;
        if (residual < 1e-9 || (small_steps >= 3 && residual < 1e-5)) {
            res.converged = true;
            break;
        }
    }
    res.beta = x;
    res.objective = Fx;
    return res;
}

PhaseResult run_bcd(const SmoothPart& smooth, const GroupStructure& groups, const Penalty& pen,
                    const VectorXd& start, double L0, const SolverOptions& opts, int budget,
                    std::vector<double>* trace) {
    PhaseResult res;
    VectorXd x = start;
    double Fx = smooth.value(x) + penalty_value(groups, pen, x);
    if (!std::isfinite(Fx)) {
        x.setZero();
        Fx = smooth.value(x) + penalty_value(groups, pen, x);
    }
    if (trace) trace->push_back(Fx);
    std::vector<double> Lg(groups.num_groups(), L0);
    for (int sweep = 0; sweep < budget; ++sweep) {
        res.iterations = sweep + 1;
        double max_move = 0.0;
        for (int g = 0; g < groups.num_groups(); ++g) {
            const auto& idx = groups.members(g);
            double fx = 0.0;
            const VectorXd grad = smooth.grad(x, &fx);
            const VectorXd gg = grad(idx);
            VectorXd cand = x;
            double fc = kInf;
            for (int bt = 0; bt < 80; ++bt) {
                cand(idx) = group_soft_threshold(x(idx) - gg / Lg[g], pen.lambda(g) / Lg[g]);
                fc = smooth.value(cand);
                const VectorXd d = cand(idx) - x(idx);
                if (fc <= fx + gg.dot(d) + 0.5 * Lg[g] * d.squaredNorm() + 1e-12 * std::abs(fx)) break;
                Lg[g] *= 2.0;
            }
            max_move = std::max(max_move, Lg[g] * (cand(idx) - x(idx)).lpNorm<Eigen::Infinity>());
            x = cand;
            Lg[g] = std::max(Lg[g] * 0.9, 1e-12);
        }
        const double Fn = smooth.value(x) + penalty_value(groups, pen, x);
        const double change = Fx - Fn;
        Fx = Fn;
        if (trace) trace->push_back(Fx);
        res.residual = max_move;
        if (max_move < 1e-9 || (std::abs(change) <= opts.tol * std::max(1.0, std::abs(Fx)) && max_move < 1e-5)) {
            res.converged = true;
            break;
        }
    }
    res.beta = x;
    res.objective = Fx;
    return res;
}

std::vector<int> active_groups_of(const GroupStructure& groups, const VectorXd& beta, double active_tol) {
    std::vector<int> out;
    for (int g = 0; g < groups.num_groups(); ++g)
        if (beta(groups.members(g)).norm() > active_tol) out.push_back(g);
    return out;
}

/// Newton's method on the active groups with the others held at zero. The
/// penalty is smooth there, with Hessian lambda_g (I - u u') / ||beta_g||.
bool newton_polish(const SmoothPart& smooth, const Dataset& ds, const GroupStructure& groups, const Penalty& pen,
                   VectorXd& beta, double active_tol) {
    const std::vector<int> active = active_groups_of(groups, beta, active_tol);
    if (active.empty()) return true;
    const IndexSet cols = groups.columns_of(active);
    const MatrixXd XA = ds.X(Eigen::all, cols);
    auto objective = [&](const VectorXd& b) { return smooth.value(b) + penalty_value(groups, pen, b); };
    // Gradient of the objective restricted to the active columns; empty if a group collapsed.
    auto reduced_grad = [&](const VectorXd& b, VectorXd& full_grad) {
        full_grad = smooth.grad(b);
        VectorXd G = full_grad(cols);
        int offset = 0;
        for (int g : active) {
            const int s = groups.size(g);
            const VectorXd bg = b(groups.members(g));
            const double norm = bg.norm();
            if (norm <= active_tol) return VectorXd();
            G.segment(offset, s) += pen.lambda(g) * bg / norm;
            offset += s;
        }
        return G;
    };
    double F = objective(beta);
    VectorXd full_grad;
    VectorXd G = reduced_grad(beta, full_grad);
    if (G.size() == 0) return false;
    for (int it = 0; it < 100; ++it) {
        if (G.lpNorm<Eigen::Infinity>() < 1e-13 * std::max(1.0, full_grad.lpNorm<Eigen::Infinity>())) return true;
        MatrixXd Hs = XA.transpose() * smooth.weights(beta).asDiagonal() * XA / smooth.sqrt_n();
        int offset = 0;
        for (int g : active) {
            const int s = groups.size(g);
            const VectorXd bg = beta(groups.members(g));
            const double norm = bg.norm();
            const VectorXd u = bg / norm;
            Hs.block(offset, offset, s, s) +=
                (pen.lambda(g) / norm) * (MatrixXd::Identity(s, s) - u * u.transpose());
            offset += s;
        }
        Eigen::LDLT<MatrixXd> ldlt(linalg::symmetrize(Hs));
        if (ldlt.info() != Eigen::Success) return false;
        const VectorXd step = ldlt.solve(G);
        // Near the optimum objective changes drop below roundoff; there a step
        // counts as progress when it does not raise F measurably and shrinks G.
        const double flat = 1e-13 * std::max(1.0, std::abs(F));
        double a = 1.0;
        bool moved = false;
        for (int h = 0; h < 60 && !moved; ++h, a *= 0.5) {
            VectorXd cand = beta;
            cand(cols) -= a * step;
            const double Fc = objective(cand);
            if (!(Fc <= F + flat)) continue;
            VectorXd cand_full;
            const VectorXd Gc = reduced_grad(cand, cand_full);
            if (Gc.size() == 0) continue;
            if (Fc < F - flat || Gc.norm() < G.norm()) {
                beta = cand;
                F = Fc;
                G = Gc;
                full_grad = cand_full;
                moved = true;
            }
        }
        if (!moved) return G.lpNorm<Eigen::Infinity>() < 1e-9;
    }
    return true;
}

}  // namespace

double glasso_objective(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                        const Penalty& penalty, const VectorXd& omega, const VectorXd& beta) {
    const double sqrt_n = std::sqrt(static_cast<double>(ds.n()));
    return loss_value(model, ds, beta) / sqrt_n + penalty_value(groups, penalty, beta) - sqrt_n * omega.dot(beta);
}

GroupLassoSolution solve_group_lasso(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                                     const Penalty& penalty, const RandomizationSpec& rand,
                                     const SolverOptions& opts) {
    groups.validate(ds.p());
    penalty.validate(groups, /*allow_zero=*/true);
    if (rand.omega.size() != ds.p()) throw ConfigError("randomisation dimension does not match the design");

    const SmoothPart smooth(model, ds, rand.omega);
    const double L0 = initial_lipschitz(model, ds);
    GroupLassoSolution sol;
    std::vector<double>* trace = opts.record_trace ? &sol.objective_trace : nullptr;

    VectorXd beta = VectorXd::Zero(ds.p());
    int used = 0;
    double last_residual = kInf;
    bool done = false;
    for (int round = 0; round < 6 && used < opts.max_iter && !done; ++round) {
        const int budget = opts.max_iter - used;
        PhaseResult phase = opts.use_bcd ? run_bcd(smooth, groups, penalty, beta, L0, opts, budget, trace)
                                         : run_fista(smooth, groups, penalty, beta, L0, opts, budget, trace);
        used += phase.iterations;
        beta = phase.beta;
        last_residual = phase.residual;
        if (!opts.polish) {
            done = phase.converged;
            break;
        }
        VectorXd polished = beta;
        const double before = smooth.value(beta) + penalty_value(groups, penalty, beta);
        if (!newton_polish(smooth, ds, groups, penalty, polished, opts.active_tol)) {
            done = phase.converged;
            continue;
        }
        const double after = smooth.value(polished) + penalty_value(groups, penalty, polished);
        if (after > before + 1e-13 * std::max(1.0, std::abs(before))) {
            done = phase.converged;
            continue;
        }
        beta = polished;
        if (trace) trace->push_back(after);
        // Inactive groups must still satisfy their subgradient bound.
        const VectorXd g = smooth.grad(beta);
        bool kkt_ok = true;
        for (int grp = 0; grp < groups.num_groups(); ++grp) {
            const auto& idx = groups.members(grp);
            if (beta(idx).norm() > opts.active_tol) continue;
            if (g(idx).norm() > penalty.lambda(grp) * (1.0 + 1e-10)) kkt_ok = false;
        }
        if (kkt_ok) {
            done = true;
            last_residual = 0.0;
        }
    }
    sol.iterations = used;
    sol.converged = done;
    if (!done) {
        throw ConvergenceError("group lasso did not converge within " + std::to_string(opts.max_iter) +
                                   " iterations (last residual " + std::to_string(last_residual) + ")",
                               last_residual);
    }

    // Extract the selection triple; zero out sub-threshold groups so that the
    // stored beta and the reported active set agree.
    for (int g = 0; g < groups.num_groups(); ++g) {
        const auto& idx = groups.members(g);
        const double norm = beta(idx).norm();
        if (norm > 0.5 * opts.active_tol && norm < 2.0 * opts.active_tol) sol.degenerate = true;
        if (norm > opts.active_tol) {
            sol.active_groups.push_back(g);
        } else {
            beta(idx).setZero();
            sol.inactive_groups.push_back(g);
        }
    }
    sol.beta = beta;
    sol.E = groups.columns_of(sol.active_groups);
    sol.gamma.resize(static_cast<int>(sol.active_groups.size()));
    for (std::size_t k = 0; k < sol.active_groups.size(); ++k) {
        const VectorXd bg = beta(groups.members(sol.active_groups[k]));
        sol.gamma(static_cast<int>(k)) = bg.norm();
        sol.u.push_back(bg / bg.norm());
    }
    const VectorXd g = smooth.grad(beta);
    for (int grp : sol.inactive_groups) {
        const auto& idx = groups.members(grp);
        const double l = penalty.lambda(grp);
        sol.z.push_back(l > 0.0 ? VectorXd(-g(idx) / l) : VectorXd::Zero(static_cast<int>(idx.size())));
    }
    sol.objective = smooth.value(beta) + penalty_value(groups, penalty, beta);
    sol.kkt_residual = kkt_stationarity(model, ds, groups, penalty, rand, sol);
    return sol;
}

double kkt_stationarity(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                        const Penalty& penalty, const RandomizationSpec& rand, const GroupLassoSolution& sol) {
    const double sqrt_n = std::sqrt(static_cast<double>(ds.n()));
    const VectorXd all = [&] {
        IndexSet idx(ds.p());
        std::iota(idx.begin(), idx.end(), 0);
        return gradient(model, ds, sol.beta, idx);
    }();
    VectorXd res = all / sqrt_n - sqrt_n * rand.omega;
    for (std::size_t k = 0; k < sol.active_groups.size(); ++k) {
        const int g = sol.active_groups[k];
        res(groups.members(g)) += penalty.lambda(g) * sol.u[k];
    }
    for (std::size_t k = 0; k < sol.inactive_groups.size(); ++k) {
        const int g = sol.inactive_groups[k];
        res(groups.members(g)) += penalty.lambda(g) * sol.z[k];
    }
    return res.size() ? res.lpNorm<Eigen::Infinity>() : 0.0;
}

bool check_selection_event(const GroupLassoSolution& sol, double active_tol) {
    if (sol.degenerate) return false;
    for (int k = 0; k < sol.gamma.size(); ++k) {
        if (!(sol.gamma(k) > active_tol)) return false;
        if (std::abs(sol.u[k].norm() - 1.0) > 1e-10) return false;
    }
    return true;
}

}  // namespace postgl
