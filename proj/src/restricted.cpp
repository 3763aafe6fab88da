#include "postgl/restricted.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "postgl/errors.hpp"
#include "postgl/linalg.hpp"

namespace postgl {

namespace {

double restricted_loss(const LossModel& model, const Dataset& ds, const IndexSet& E, const VectorXd& b) {
    const VectorXd theta = linear_predictor(ds, b, E);
    const bool count = model.kind == LossKind::poisson || model.kind == LossKind::quasi_poisson;
    double total = 0.0;
    for (int i = 0; i < ds.n(); ++i) {
        if (count && theta(i) > 700.0) return std::numeric_limits<double>::infinity();
        total += model.rho(theta(i), ds.y(i));
    }
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

[[noreturn]] void report_collinearity(const MatrixXd& XE, const IndexSet& E) {
    // Grow the column set until the Gram matrix loses rank.
    for (int k = 1; k <= XE.cols(); ++k) {
        const MatrixXd G = XE.leftCols(k).transpose() * XE.leftCols(k);
        Eigen::LLT<MatrixXd> llt(G);
        if (!linalg::is_factor_ok(llt)) {
            std::ostringstream msg;
            msg << "restricted design is rank deficient: column " << E[k - 1]
                << " is collinear with columns {";
            for (int j = 0; j < k - 1; ++j) msg << (j ? "," : "") << E[j];
            msg << "}";
            throw RankDeficiencyError(msg.str());
        }
    }
    throw RankDeficiencyError("restricted Hessian is singular");
}

}  // namespace

RestrictedEstimate newton_refit(const LossModel& model, const Dataset& ds, const IndexSet& E,
                                const VectorXd* warm_start, const NewtonOptions& opts) {
    if (E.empty()) throw EmptySelectionError("cannot refit on an empty column set");
    const int k = static_cast<int>(E.size());
    if (ds.n() <= k) throw RankDeficiencyError("n = " + std::to_string(ds.n()) + " does not exceed |E| = " + std::to_string(k));
    const MatrixXd XE = ds.X(Eigen::all, E);
    const double sqrt_n = std::sqrt(static_cast<double>(ds.n()));

    RestrictedEstimate est;
    est.E = E;
    VectorXd b = VectorXd::Zero(k);
    if (warm_start && warm_start->size() == k && warm_start->allFinite()) b = *warm_start;
    double F = restricted_loss(model, ds, E, b);
    if (!std::isfinite(F)) {
        b.setZero();
        F = restricted_loss(model, ds, E, b);
    }

    for (int it = 0; it < opts.max_iter; ++it) {
        est.iterations = it + 1;
        const VectorXd theta = XE * b;
        VectorXd r(ds.n()), w(ds.n());
        for (int i = 0; i < ds.n(); ++i) {
            r(i) = model.drho(theta(i), ds.y(i));
            w(i) = model.d2rho(theta(i));
        }
        const VectorXd grad = XE.transpose() * r;
        est.gradient_norm = grad.lpNorm<Eigen::Infinity>() / sqrt_n;
        if (est.gradient_norm < opts.tol) break;

        const MatrixXd Hess = XE.transpose() * w.asDiagonal() * XE;
        Eigen::LLT<MatrixXd> llt(Hess);
        if (!linalg::is_factor_ok(llt)) {
            if (model.kind == LossKind::logistic && theta.lpNorm<Eigen::Infinity>() > 20.0) {
                throw SeparationError("logistic refit diverges (quasi-complete separation)");
            }
            report_collinearity(XE, E);
        }
        const VectorXd step = llt.solve(grad);
        // In the Newton region the summed loss is flat to rounding; judge the
        // full step by the gradient it leaves.
        if (grad.dot(step) < 1e-10 * std::max(1.0, std::abs(F))) {
            const VectorXd cand = b - step;
            const VectorXd theta_c = XE * cand;
            VectorXd rc(ds.n());
            for (int i = 0; i < ds.n(); ++i) rc(i) = model.drho(theta_c(i), ds.y(i));
            if ((XE.transpose() * rc).lpNorm<Eigen::Infinity>() / sqrt_n < 0.5 * est.gradient_norm) {
                b = cand;
                F = restricted_loss(model, ds, E, b);
                continue;
            }
            break;
        }
        double a = 1.0;
        bool accepted = false;
        VectorXd cand;
        double Fc = F;
        for (int h = 0; h <= opts.max_halvings; ++h) {
            cand = b - a * step;
            Fc = restricted_loss(model, ds, E, cand);
            if (Fc <= F) {
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if (!accepted) break;  // stalled at floating-point resolution
        const double decrease = F - Fc;
        b = cand;
        F = Fc;
        if (b.norm() > opts.divergence_bound) {
            throw SeparationError("restricted estimate diverges (||beta|| > " +
                                  std::to_string(opts.divergence_bound) + "); the data are separable");
        }
        if (decrease <= 1e-15 * std::max(1.0, std::abs(F)) && a * step.lpNorm<Eigen::Infinity>() < 1e-14) break;
    }

    est.beta_E = b;
    const VectorXd theta = XE * b;
    VectorXd r(ds.n());
    for (int i = 0; i < ds.n(); ++i) r(i) = model.drho(theta(i), ds.y(i));
    est.gradient_norm = (XE.transpose() * r).lpNorm<Eigen::Infinity>() / sqrt_n;
    // Fitted probabilities within 1e-13 of 0 or 1 only arise from separation.
    if (model.kind == LossKind::logistic && theta.lpNorm<Eigen::Infinity>() > 30.0) {
        throw SeparationError("logistic refit drives fitted probabilities to 0 or 1 (separation)");
    }
    // Near-optimal after stalling is acceptable; far from it is not.
    if (est.gradient_norm > 1e-6) {
        throw ConvergenceError("restricted Newton refit did not converge", est.gradient_norm);
    }
    return est;
}

CovarianceBlocks covariance_blocks(const MomentMatrices& m) {
    CovarianceBlocks out;
    const MatrixXd H_EE = m.H_EE();
    const MatrixXd K_EE = m.K_EE();
    const MatrixXd H_EpE = m.H_EpE();
    const MatrixXd K_EpE = m.K_EpE();
    const MatrixXd K_EpEp = m.K_EpEp();
    const auto H_llt = linalg::checked_llt(H_EE, "H_EE");

    const bool proportional = m.K.size() > 0 && (m.K - m.dispersion * m.H).cwiseAbs().maxCoeff() == 0.0;
    if (proportional) {
        const MatrixXd H_inv = linalg::spd_inverse(H_EE, "H_EE");
        out.Sigma_E = m.dispersion * H_inv;
        out.A_E = MatrixXd::Zero(H_EpE.rows(), H_EE.cols());
        out.Sigma_perp =
            linalg::symmetrize(m.dispersion * (m.H(m.Eprime, m.Eprime) - H_EpE * H_llt.solve(H_EpE.transpose())));
        return out;
    }

    const auto K_llt = linalg::checked_llt(K_EE, "K_EE");
    const MatrixXd HinvK = H_llt.solve(K_EE);
    out.Sigma_E = linalg::symmetrize(H_llt.solve(HinvK.transpose()));
    out.Sigma_perp = linalg::symmetrize(K_EpEp - K_EpE * K_llt.solve(K_EpE.transpose()));
    out.A_E = H_EpE - K_EpE * K_llt.solve(H_EE);
    return out;
}

VectorXd compute_beta_perp(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                           const MomentMatrices& moments, const MatrixXd& A_E) {
    if (moments.Eprime.empty()) return VectorXd(0);
    const VectorXd g = gradient(model, ds, beta_E, moments.E);
    return g(moments.Eprime) / static_cast<double>(ds.n()) - A_E * beta_E;
}

RestrictedFit fit_restricted(const LossModel& model, const Dataset& ds, const GroupStructure& groups,
                             const IndexSet& E, const VectorXd* warm_start, const NewtonOptions& opts) {
    RestrictedEstimate est = newton_refit(model, ds, E, warm_start, opts);
    RestrictedFit fit;
    fit.E = E;
    fit.beta_E = est.beta_E;
    fit.iterations = est.iterations;
    fit.gradient_norm = est.gradient_norm;
    fit.n = ds.n();
    fit.moments = estimate_moments(model, ds, est.beta_E, E, groups);
    fit.Eprime = fit.moments.Eprime;
    CovarianceBlocks blocks = covariance_blocks(fit.moments);
    fit.Sigma_E = std::move(blocks.Sigma_E);
    fit.Sigma_perp = std::move(blocks.Sigma_perp);
    fit.A_E = std::move(blocks.A_E);
    fit.beta_perp = compute_beta_perp(model, ds, fit.beta_E, fit.moments, fit.A_E);
    return fit;
}

}  // namespace postgl
