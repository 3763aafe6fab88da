// Direct evaluation of the post-selection log-likelihood by nested
// optimisation. Independent of the closed-form MLE and Fisher formulas; the
// test suites use it as their reference.

#include <cmath>
#include <limits>

#include "postgl/errors.hpp"
#include "postgl/linalg.hpp"
#include "postgl/selective.hpp"

namespace postgl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct InnerEval {
    double value;
    VectorXd grad_b;
    VectorXd grad_g;
};

double inner_value(const SelectiveProblem& prob, const VectorXd& m, const VectorXd& b, const VectorXd& g) {
    try {
        const VectorXd db = b - m;
        const VectorXd r = g - prob.A_bar * b - prob.b_bar;
        const double v = 0.5 * db.dot(prob.Theta_bar_inv * db) + 0.5 * r.dot(prob.Omega_bar_inv * r) -
                         log_jacobian(prob, g) + barrier(g, prob.barrier_c);
        return std::isfinite(v) ? v : kInf;
    } catch (const DomainError&) {
        return kInf;
    }
}

}  // namespace

InnerSolution brute_force_inner(const SelectiveProblem& prob, const VectorXd& t_scaled) {
    const int k = prob.dim_E();
    const int G = prob.num_active_groups();
    const double c = prob.barrier_c;
    const VectorXd m = prob.R_bar * t_scaled + prob.s_bar;
    VectorXd b = prob.beta_E_scaled;
    VectorXd g = prob.gamma_scaled.cwiseMax(c + 1.0);
    double F = inner_value(prob, m, b, g);
    if (!std::isfinite(F)) throw NumericalError("inner objective not finite at the start");

    auto gradient_at = [&](const VectorXd& bb, const VectorXd& gg) {
        const VectorXd Or = prob.Omega_bar_inv * (gg - prob.A_bar * bb - prob.b_bar);
        VectorXd grad(k + G);
        grad.head(k) = prob.Theta_bar_inv * (bb - m) - prob.A_bar.transpose() * Or;
        grad.tail(G) = Or - grad_log_jacobian(prob, gg) + grad_barrier(gg, c);
        return grad;
    };
    const MatrixXd OA = prob.Omega_bar_inv * prob.A_bar;
    VectorXd grad = gradient_at(b, g);
    for (int it = 0;; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() < 1e-12) break;
        if (it == 300) throw ConvergenceError("brute-force inner problem did not converge", grad.lpNorm<Eigen::Infinity>());
        MatrixXd Hs(k + G, k + G);
        Hs.topLeftCorner(k, k) = prob.Theta_bar_inv + prob.A_bar.transpose() * OA;
        Hs.topRightCorner(k, G) = -OA.transpose();
        Hs.bottomLeftCorner(G, k) = -OA;
        Hs.bottomRightCorner(G, G) =
            prob.Omega_bar_inv - hess_log_jacobian(prob, g) + MatrixXd(hess_barrier(g, c).asDiagonal());
        const auto llt = linalg::checked_llt(linalg::symmetrize(Hs), "inner Hessian");
        const VectorXd d = -llt.solve(grad);
        const double decrement = -grad.dot(d);

        double a = 1.0;
        for (int j = 0; j < G; ++j)
            if (d(k + j) < 0.0) a = std::min(a, 0.99 * (g(j) - c) / (-d(k + j)));
        // Near the optimum F is flat to rounding; judge full steps by the gradient instead.
        if (a == 1.0 && decrement < 1e-8 * std::max(1.0, std::abs(F))) {
            const VectorXd nb = b + d.head(k), ng = g + d.tail(G);
            const VectorXd ngrad = gradient_at(nb, ng);
            if (ngrad.lpNorm<Eigen::Infinity>() < 0.5 * grad.lpNorm<Eigen::Infinity>()) {
                b = nb;
                g = ng;
                grad = ngrad;
                F = inner_value(prob, m, b, g);
                continue;
            }
            break;  // converged to the resolution of the gradient
        }
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            const VectorXd nb = b + a * d.head(k);
            const VectorXd ng = g + a * d.tail(G);
            const double Fc = inner_value(prob, m, nb, ng);
            if (Fc <= F - 1e-4 * a * decrement) {
                b = nb;
                g = ng;
                F = Fc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if (!accepted) throw ConvergenceError("brute-force inner problem stalled", decrement);
        grad = gradient_at(b, g);
    }
    return InnerSolution{F, b, g};
}

double brute_force_loglik(const SelectiveProblem& prob, const VectorXd& t_scaled) {
    const int k = prob.dim_E();
    const VectorXd m = prob.R_bar * t_scaled + prob.s_bar;
    const VectorXd d = prob.beta_E_scaled - m;
    const auto llt = linalg::checked_llt(prob.Theta_bar, "Theta_bar");
    double log_det = 0.0;
    for (int i = 0; i < k; ++i) log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
    const double log_density = -0.5 * d.dot(prob.Theta_bar_inv * d) - 0.5 * log_det - 0.5 * k * std::log(2.0 * M_PI);
    return log_density + brute_force_inner(prob, t_scaled).value;
}

VectorXd brute_force_score(const SelectiveProblem& prob, const VectorXd& t_scaled) {
    const InnerSolution inner = brute_force_inner(prob, t_scaled);
    return prob.R_bar.transpose() * (prob.Theta_bar_inv * (prob.beta_E_scaled - inner.b));
}

namespace {

MatrixXd fd_score_jacobian(const SelectiveProblem& prob, const VectorXd& t) {
    const int k = static_cast<int>(t.size());
    MatrixXd J(k, k);
    for (int j = 0; j < k; ++j) {
        const double h = 1e-4 * std::max(1.0, std::abs(t(j)));
        VectorXd tp = t, tm = t;
        tp(j) += h;
        tm(j) -= h;
        J.col(j) = (brute_force_score(prob, tp) - brute_force_score(prob, tm)) / (2.0 * h);
    }
    return linalg::symmetrize(J);
}

}  // namespace

BruteForceMle brute_force_mle(const SelectiveProblem& prob) {
    VectorXd t = prob.R_bar_inv * (prob.beta_E_scaled - prob.s_bar);
    BruteForceMle out;
    double L = brute_force_loglik(prob, t);
    for (int it = 0; it < 100; ++it) {
        out.iterations = it + 1;
        const VectorXd s = brute_force_score(prob, t);
        if (s.lpNorm<Eigen::Infinity>() < 1e-10 * std::max(1.0, t.lpNorm<Eigen::Infinity>())) break;
        const MatrixXd J = fd_score_jacobian(prob, t);
        const auto llt = linalg::checked_llt(-J, "negative log-likelihood Hessian");
        const VectorXd d = llt.solve(s);
        double a = 1.0;
        bool accepted = false;
        for (int h = 0; h < 50; ++h) {
            const VectorXd cand = t + a * d;
            const double Lc = brute_force_loglik(prob, cand);
            if (Lc >= L) {
                t = cand;
                L = Lc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if (!accepted) break;
    }
    const double sqrt_n = std::sqrt(static_cast<double>(prob.n));
    out.mle = t / sqrt_n;
    out.fisher = -static_cast<double>(prob.n) * fd_score_jacobian(prob, t);
    return out;
}

}  // namespace postgl
