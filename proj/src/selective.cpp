#include "postgl/selective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "postgl/errors.hpp"
#include "postgl/linalg.hpp"

namespace postgl {

MatrixXd orthogonal_completion(const VectorXd& u) {
    const int s = static_cast<int>(u.size());
    MatrixXd basis(s, s);
    basis.col(0) = u / u.norm();
    int filled = 1;
    std::vector<int> order(s);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(u(a)) < std::abs(u(b)); });
    for (int j : order) {
        if (filled == s) break;
        VectorXd v = VectorXd::Unit(s, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (int c = 0; c < filled; ++c) v -= basis.col(c).dot(v) * basis.col(c);
        }
        const double norm = v.norm();
        if (norm < 1e-8) continue;
        basis.col(filled++) = v / norm;
    }
    return basis.rightCols(s - 1);
}

namespace {

double max_rel_diff(const MatrixXd& a, const MatrixXd& b) {
    if (a.size() == 0) return 0.0;
    const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

SelectiveProblem build_problem(const RestrictedFit& fit, const GroupLassoSolution& sol, const GroupStructure& groups,
                               const Penalty& penalty, const RandomizationSpec& rand, const BuildOptions& opts) {
    if (sol.empty()) throw EmptySelectionError("nothing selected: inference is undefined for an empty active set");
    if (fit.E != sol.E) throw ConfigError("restricted fit and group-lasso solution disagree on the active set");

    SelectiveProblem prob;
    prob.n = fit.n;
    prob.E = sol.E;
    prob.Eprime = fit.Eprime;
    prob.active_groups = sol.active_groups;
    prob.inactive_groups = sol.inactive_groups;
    prob.barrier_c = opts.barrier_c;
    const double sqrt_n = std::sqrt(static_cast<double>(prob.n));
    const int k = prob.dim_E();
    const int kp = static_cast<int>(prob.Eprime.size());
    const int p = k + kp;
    const int G = prob.num_active_groups();

    IndexSet perm = prob.E;
    perm.insert(perm.end(), prob.Eprime.begin(), prob.Eprime.end());
    const MatrixXd H = fit.moments.H(perm, perm);
    const MatrixXd K = fit.moments.K(perm, perm);
    prob.H_EE = H.topLeftCorner(k, k);

    prob.lambda_E.resize(k);
    prob.U_hat = MatrixXd::Zero(k, G);
    prob.U_bar = MatrixXd::Zero(k, k - G);
    prob.u_stack.resize(k);
    {
        int row = 0;
        int bar_col = 0;
        for (int a = 0; a < G; ++a) {
            const int g = prob.active_groups[a];
            const int s = groups.size(g);
            prob.active_sizes.push_back(s);
            prob.lambda_E.segment(row, s).setConstant(penalty.lambda(g));
            prob.u_stack.segment(row, s) = sol.u[a];
            prob.U_hat.block(row, a, s, 1) = sol.u[a];
            if (s > 1) prob.U_bar.block(row, bar_col, s, s - 1) = orthogonal_completion(sol.u[a]);
            prob.jacobian_blocks.emplace_back(bar_col, s - 1);
            row += s;
            bar_col += s - 1;
        }
    }
    prob.lambda_Eprime.resize(kp);
    prob.z_stack.resize(kp);
    {
        int row = 0;
        for (std::size_t a = 0; a < prob.inactive_groups.size(); ++a) {
            const int g = prob.inactive_groups[a];
            const int s = groups.size(g);
            prob.lambda_Eprime.segment(row, s).setConstant(penalty.lambda(g));
            prob.z_stack.segment(row, s) = sol.z[a];
            row += s;
        }
    }

    const auto KEE_llt = linalg::checked_llt(K.topLeftCorner(k, k), "K_EE");
    prob.A_cal = -K.leftCols(k) * KEE_llt.solve(prob.H_EE);
    prob.B_cal = H.leftCols(k);
    prob.C_cal = MatrixXd::Zero(p, kp);
    prob.C_cal.bottomRows(kp).setIdentity();
    prob.D_cal = MatrixXd::Zero(p, k);
    prob.D_cal.topRows(k) = prob.lambda_E.asDiagonal();

    prob.beta_perp_scaled = sqrt_n * fit.beta_perp;
    prob.c_vec = prob.D_cal * prob.u_stack;
    if (kp > 0) prob.c_vec += prob.C_cal * (prob.beta_perp_scaled + prob.lambda_Eprime.cwiseProduct(prob.z_stack));
    if (opts.absorb_remainder && rand.omega.size() == p) {
        // Non-quadratic losses leave a Taylor remainder between sqrt(n) omega
        // and the affine map at the observed point; fold it into the offset.
        const VectorXd observed = prob.A_cal * (sqrt_n * fit.beta_E) +
                                  prob.B_cal * (prob.U_hat * (sqrt_n * sol.gamma)) + prob.c_vec;
        prob.linearization_remainder = sqrt_n * rand.omega(perm) - observed;
        prob.c_vec += prob.linearization_remainder;
    }

    if (rand.Omega.rows() != p) throw ConfigError("randomisation covariance has the wrong dimension");
    prob.Omega = linalg::symmetrize(rand.Omega(perm, perm));
    const auto Omega_llt = [&] {
        Eigen::LLT<MatrixXd> llt(prob.Omega);
        if (!linalg::is_factor_ok(llt)) {
            throw DomainError("selective inference needs a positive definite randomisation covariance (f > 0)");
        }
        return llt;
    }();

    prob.Sigma_E = fit.Sigma_E;
    prob.Sigma_E_inv = linalg::spd_inverse(fit.Sigma_E, "Sigma_E");

    ConditionalParams cp = general_conditional_params(prob);
    if (opts.allow_shortcut && rand.form == RandomizationForm::scaled_H) {
        const double f = prob.Omega.trace() / H.trace();
        const double mismatch = (prob.Omega - f * H).cwiseAbs().maxCoeff() / prob.Omega.cwiseAbs().maxCoeff();
        if (mismatch < 1e-10) {
            ConditionalParams sc = shortcut_conditional_params(prob, f);
            prob.shortcut_discrepancy = std::max({max_rel_diff(sc.A_bar, cp.A_bar), max_rel_diff(sc.b_bar, cp.b_bar),
                                                  max_rel_diff(sc.Omega_bar, cp.Omega_bar)});
            if (prob.shortcut_discrepancy > opts.shortcut_check_tol) {
                std::ostringstream msg;
                msg << "shortcut and general constructions disagree by " << prob.shortcut_discrepancy;
                throw NumericalError(msg.str());
            }
            cp = std::move(sc);
            prob.used_shortcut = true;
        }
    }
    prob.A_bar = std::move(cp.A_bar);
    prob.b_bar = std::move(cp.b_bar);
    prob.Omega_bar = linalg::symmetrize(cp.Omega_bar);
    prob.Omega_bar_inv = linalg::spd_inverse(prob.Omega_bar, "Omega_bar");

    const MatrixXd OinvA = Omega_llt.solve(prob.A_cal);
    prob.AOA = linalg::symmetrize(prob.A_cal.transpose() * OinvA);
    const VectorXd AOc = OinvA.transpose() * prob.c_vec;
    prob.Theta_bar_inv = linalg::symmetrize(prob.Sigma_E_inv - prob.A_bar.transpose() * prob.Omega_bar_inv * prob.A_bar +
                                            prob.AOA);
    {
        Eigen::LLT<MatrixXd> llt(prob.Theta_bar_inv);
        if (!linalg::is_factor_ok(llt)) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(prob.Theta_bar_inv, Eigen::EigenvaluesOnly);
            std::ostringstream msg;
            msg << "conditioning failure: Theta_bar is not positive definite (eigenvalues of its inverse: "
                << es.eigenvalues().transpose() << ")";
            throw NumericalError(msg.str());
        }
        prob.Theta_bar = linalg::symmetrize(llt.solve(MatrixXd::Identity(k, k)));
    }
    prob.R_bar = prob.Theta_bar * prob.Sigma_E_inv;
    prob.R_bar_inv = prob.Sigma_E * prob.Theta_bar_inv;
    prob.s_bar = prob.Theta_bar * (prob.A_bar.transpose() * prob.Omega_bar_inv * prob.b_bar - AOc);

    if (k > G) {
        const auto HEE_llt = linalg::checked_llt(prob.H_EE, "H_EE");
        prob.jacobian_offset = prob.U_bar.transpose() * HEE_llt.solve(prob.lambda_E.asDiagonal() * prob.U_bar);
    } else {
        prob.jacobian_offset = MatrixXd(0, 0);
    }

    prob.beta_E_scaled = sqrt_n * fit.beta_E;
    prob.gamma_scaled = sqrt_n * sol.gamma;
    return prob;
}

ConditionalParams general_conditional_params(const SelectiveProblem& prob) {
    const auto Omega_llt = linalg::checked_llt(prob.Omega, "Omega");
    const MatrixXd BU = prob.B_cal * prob.U_hat;
    const MatrixXd W = Omega_llt.solve(BU);
    ConditionalParams cp;
    cp.Omega_bar = linalg::spd_inverse(linalg::symmetrize(BU.transpose() * W), "(BU)' Omega^{-1} BU");
    cp.A_bar = -cp.Omega_bar * (W.transpose() * prob.A_cal);
    cp.b_bar = -cp.Omega_bar * (W.transpose() * prob.c_vec);
    return cp;
}

ConditionalParams shortcut_conditional_params(const SelectiveProblem& prob, double f) {
    const MatrixXd UHU = linalg::symmetrize(prob.U_hat.transpose() * prob.H_EE * prob.U_hat);
    const auto llt = linalg::checked_llt(UHU, "U' H_EE U");
    ConditionalParams cp;
    cp.Omega_bar = f * linalg::spd_inverse(UHU, "U' H_EE U");
    cp.A_bar = llt.solve(prob.U_hat.transpose() * prob.H_EE);
    cp.b_bar = -llt.solve(prob.U_hat.transpose() * prob.lambda_E.cwiseProduct(prob.u_stack));
    return cp;
}

VectorXd pi_map(const SelectiveProblem& prob, const VectorXd& b_scaled, const VectorXd& g_scaled) {
    return prob.A_cal * b_scaled + prob.B_cal * (prob.U_hat * g_scaled) + prob.c_vec;
}

namespace {

MatrixXd jacobian_matrix(const SelectiveProblem& prob, const VectorXd& g) {
    if (g.size() != prob.num_active_groups()) throw ConfigError("g has the wrong dimension");
    MatrixXd M = prob.jacobian_offset;
    for (int a = 0; a < g.size(); ++a) {
        const auto [start, len] = prob.jacobian_blocks[a];
        for (int i = start; i < start + len; ++i) M(i, i) += g(a);
    }
    return M;
}

Eigen::PartialPivLU<MatrixXd> jacobian_lu(const SelectiveProblem& prob, const VectorXd& g, double* log_det) {
    const MatrixXd M = jacobian_matrix(prob, g);
    Eigen::PartialPivLU<MatrixXd> lu(M);
    // Sign and log-magnitude of det from the LU factors.
    const VectorXd d = lu.matrixLU().diagonal();
    double sign = lu.permutationP().determinant();
    double acc = 0.0;
    for (int i = 0; i < d.size(); ++i) {
        if (!(d(i) != 0.0) || !std::isfinite(d(i))) throw DomainError("Jacobian matrix is singular");
        if (d(i) < 0) sign = -sign;
        acc += std::log(std::abs(d(i)));
    }
    if (sign <= 0) throw DomainError("Jacobian determinant is not positive");
    if (log_det) *log_det = acc;
    return lu;
}

}  // namespace

double log_jacobian(const SelectiveProblem& prob, const VectorXd& g) {
    if (prob.jacobian_offset.rows() == 0) return 0.0;
    double ld = 0.0;
    jacobian_lu(prob, g, &ld);
    return ld;
}

VectorXd grad_log_jacobian(const SelectiveProblem& prob, const VectorXd& g) {
    VectorXd out = VectorXd::Zero(prob.num_active_groups());
    if (prob.jacobian_offset.rows() == 0) return out;
    const auto lu = jacobian_lu(prob, g, nullptr);
    const MatrixXd inv = lu.inverse();
    for (int a = 0; a < out.size(); ++a) {
        const auto [start, len] = prob.jacobian_blocks[a];
        out(a) = len > 0 ? inv.diagonal().segment(start, len).sum() : 0.0;
    }
    return out;
}

MatrixXd hess_log_jacobian(const SelectiveProblem& prob, const VectorXd& g) {
    const int G = prob.num_active_groups();
    MatrixXd out = MatrixXd::Zero(G, G);
    if (prob.jacobian_offset.rows() == 0) return out;
    const auto lu = jacobian_lu(prob, g, nullptr);
    const MatrixXd inv = lu.inverse();
    // -sum_{i in M_a, j in M_b} inv_ij inv_ji
    for (int a = 0; a < G; ++a) {
        const auto [sa, la] = prob.jacobian_blocks[a];
        for (int b = 0; b < G; ++b) {
            const auto [sb, lb] = prob.jacobian_blocks[b];
            if (la == 0 || lb == 0) continue;
            out(a, b) = -inv.block(sa, sb, la, lb).cwiseProduct(inv.block(sb, sa, lb, la).transpose()).sum();
        }
    }
    return linalg::symmetrize(out);
}

namespace {

void check_barrier_domain(const VectorXd& v, double c) {
    for (int k = 0; k < v.size(); ++k) {
        if (!(v(k) > c)) {
            throw DomainError("barrier argument " + std::to_string(v(k)) + " is not above c = " + std::to_string(c));
        }
    }
}

}  // namespace

double barrier(const VectorXd& v, double c) {
    check_barrier_domain(v, c);
    double total = 0.0;
    for (int k = 0; k < v.size(); ++k) total += std::log1p(1.0 / (v(k) - c));
    return total;
}

VectorXd grad_barrier(const VectorXd& v, double c) {
    check_barrier_domain(v, c);
    VectorXd out(v.size());
    for (int k = 0; k < v.size(); ++k) {
        const double x = v(k) - c;
        out(k) = -1.0 / (x * (x + 1.0));
    }
    return out;
}

VectorXd hess_barrier(const VectorXd& v, double c) {
    check_barrier_domain(v, c);
    VectorXd out(v.size());
    for (int k = 0; k < v.size(); ++k) {
        const double x = v(k) - c;
        out(k) = (2.0 * x + 1.0) / (x * x * (x + 1.0) * (x + 1.0));
    }
    return out;
}

double gstar_objective(const SelectiveProblem& prob, const VectorXd& b_scaled, const VectorXd& g) {
    const VectorXd r = g - prob.A_bar * b_scaled - prob.b_bar;
    return 0.5 * r.dot(prob.Omega_bar_inv * r) - log_jacobian(prob, g) + barrier(g, prob.barrier_c);
}

namespace {

/// Largest step in (0, 1] keeping every coordinate above c + 0.01 (v - c).
double fraction_to_boundary(const VectorXd& v, const VectorXd& d, double c) {
    double a = 1.0;
    for (int k = 0; k < v.size(); ++k) {
        if (d(k) < 0.0) a = std::min(a, 0.99 * (v(k) - c) / (-d(k)));
    }
    return a;
}

double safe_objective(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
    try {
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

GstarResult solve_gstar(const SelectiveProblem& prob, const VectorXd& b_scaled) {
    const double c = prob.barrier_c;
    const VectorXd mu = prob.A_bar * b_scaled + prob.b_bar;
    VectorXd g = prob.gamma_scaled.cwiseMax(c + 1.0);
    auto objective = [&](const VectorXd& x) { return gstar_objective(prob, b_scaled, x); };
    auto gradient_at = [&](const VectorXd& x) -> VectorXd {
        return prob.Omega_bar_inv * (x - mu) - grad_log_jacobian(prob, x) + grad_barrier(x, c);
    };
    double F = objective(g);
    if (!std::isfinite(F)) throw DomainError("g* objective is not finite at the starting point");

    GstarResult res;
    std::ostringstream trace;
    for (int it = 0; it < 200; ++it) {
        res.iterations = it;
        const VectorXd grad = gradient_at(g);
        res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
        trace << " it" << it << ":F=" << F << ",|grad|=" << res.gradient_norm;
        if (res.gradient_norm < 1e-13) break;
        const MatrixXd curvature = -hess_log_jacobian(prob, g) + MatrixXd(hess_barrier(g, c).asDiagonal());
        const MatrixXd Hess = linalg::symmetrize(prob.Omega_bar_inv + curvature);
        Eigen::LLT<MatrixXd> llt(Hess);
        if (!linalg::is_factor_ok(llt)) throw NumericalError("g* objective Hessian is not positive definite");
        const VectorXd d = -llt.solve(grad);
        double a = fraction_to_boundary(g, d, c);
        const double slope = grad.dot(d);
        // Inside the Newton region the objective is flat to rounding, so full
        // steps are judged by the gradient they leave behind.
        if (a == 1.0 && -slope < 1e-8 * std::max(1.0, std::abs(F))) {
            const VectorXd cand = g + d;
            if (gradient_at(cand).lpNorm<Eigen::Infinity>() < 0.5 * res.gradient_norm) {
                g = cand;
                F = safe_objective(objective, g);
                res.iterations = it + 1;
                continue;
            }
            break;
        }
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            const VectorXd cand = g + a * d;
            const double Fc = safe_objective(objective, cand);
            if (Fc <= F + 1e-4 * a * slope) {
                g = cand;
                F = Fc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if (!accepted) {
            // No representable decrease left; accept if already essentially stationary.
            if (res.gradient_norm < 1e-7 * std::max(1.0, g.lpNorm<Eigen::Infinity>())) break;
            throw ConvergenceError("g* line search failed;" + trace.str(), res.gradient_norm);
        }
        res.iterations = it + 1;
    }
    res.gradient_norm = gradient_at(g).lpNorm<Eigen::Infinity>();
    if (res.gradient_norm > 1e-7 * std::max(1.0, g.lpNorm<Eigen::Infinity>())) {
        throw ConvergenceError("g* Newton did not converge;" + trace.str(), res.gradient_norm);
    }
    res.g = g;
    res.curvature = linalg::symmetrize(-hess_log_jacobian(prob, g) + MatrixXd(hess_barrier(g, c).asDiagonal()));
    return res;
}

VectorXd selective_mle(const SelectiveProblem& prob, const VectorXd& gstar) {
    const VectorXd& bs = prob.beta_E_scaled;
    const VectorXd correction =
        prob.Sigma_E * (prob.A_bar.transpose() * (prob.Omega_bar_inv * (prob.A_bar * bs + prob.b_bar - gstar)));
    const VectorXd t = prob.R_bar_inv * (bs - prob.s_bar) + correction;
    return t / std::sqrt(static_cast<double>(prob.n));
}

FisherInfo observed_fisher(const SelectiveProblem& prob, const VectorXd& gstar) {
    const double c = prob.barrier_c;
    const MatrixXd curvature = -hess_log_jacobian(prob, gstar) + MatrixXd(hess_barrier(gstar, c).asDiagonal());
    const MatrixXd bracket = linalg::symmetrize(prob.Omega_bar_inv + curvature);
    const auto llt = linalg::checked_llt(bracket, "Omega_bar^{-1} - grad^2 log J + grad^2 Barr");
    const MatrixXd OA = prob.Omega_bar_inv * prob.A_bar;
    const MatrixXd M = prob.Theta_bar_inv + prob.A_bar.transpose() * OA - OA.transpose() * llt.solve(OA);
    const auto M_llt = linalg::checked_llt(linalg::symmetrize(M), "M");
    const double n = prob.n;
    FisherInfo out;
    const MatrixXd raw = n * prob.Sigma_E_inv * M_llt.solve(prob.Sigma_E_inv);
    const double scale = std::max(raw.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    out.asymmetry = linalg::max_asymmetry(raw) / scale;
    if (out.asymmetry > 1e-8) throw NumericalError("observed Fisher information is not symmetric");
    out.fisher = linalg::symmetrize(raw);
    out.inverse = linalg::symmetrize(prob.Sigma_E * M * prob.Sigma_E / n);
    return out;
}

double variance_bound(const SelectiveProblem& prob) {
    const double u0 = std::max(linalg::lambda_max(prob.Sigma_E), linalg::lambda_max(prob.AOA));
    return u0 * (1.0 + u0 * u0) / prob.n;
}

WaldResult wald_inference(const VectorXd& estimate, const MatrixXd& covariance, const std::vector<int>& group_sizes,
                          double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const int k = static_cast<int>(estimate.size());
    if (std::accumulate(group_sizes.begin(), group_sizes.end(), 0) != k) {
        throw ConfigError("group sizes do not cover the estimate");
    }
    const boost::math::normal_distribution<double> normal(0.0, 1.0);
    const double z = boost::math::quantile(normal, 1.0 - alpha / 2.0);
    WaldResult w;
    w.alpha = alpha;
    w.estimate = estimate;
    w.std_error.resize(k);
    w.lower.resize(k);
    w.upper.resize(k);
    w.pvalue.resize(k);
    for (int j = 0; j < k; ++j) {
        const double var = covariance(j, j);
        if (!(var > 0.0) || !std::isfinite(var)) throw NumericalError("non-positive variance for coefficient " + std::to_string(j));
        const double se = std::sqrt(var);
        w.std_error(j) = se;
        w.lower(j) = estimate(j) - z * se;
        w.upper(j) = estimate(j) + z * se;
        const double stat = std::abs(estimate(j)) / se;
        w.pvalue(j) = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, stat)));
    }
    const int G = static_cast<int>(group_sizes.size());
    w.group_stat.resize(G);
    w.group_pvalue.resize(G);
    int start = 0;
    for (int a = 0; a < G; ++a) {
        const int s = group_sizes[a];
        const VectorXd e = estimate.segment(start, s);
        const auto llt = linalg::checked_llt(linalg::symmetrize(covariance.block(start, start, s, s)), "group covariance");
        const double stat = e.dot(llt.solve(e));
        w.group_stat(a) = stat;
        w.group_df.push_back(s);
        const boost::math::chi_squared_distribution<double> chi2(s);
        w.group_pvalue(a) = boost::math::cdf(boost::math::complement(chi2, std::max(stat, 0.0)));
        start += s;
    }
    return w;
}

SelectiveFit selective_inference(const SelectiveProblem& prob, double alpha) {
    SelectiveFit out;
    const GstarResult gs = solve_gstar(prob, prob.beta_E_scaled);
    out.gstar = gs.g;
    out.gstar_iterations = gs.iterations;
    out.mle = selective_mle(prob, gs.g);
    const FisherInfo fi = observed_fisher(prob, gs.g);
    out.fisher = fi.fisher;
    out.fisher_inverse = fi.inverse;
    out.variance_bound = variance_bound(prob);
    out.wald = wald_inference(out.mle, out.fisher_inverse, prob.active_sizes, alpha);
    return out;
}

}  // namespace postgl
