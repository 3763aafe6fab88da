#include "postgl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "postgl/errors.hpp"
#include "postgl/linalg.hpp"

namespace postgl {

Dataset Dataset::subset_rows(const std::vector<int>& rows) const {
    Dataset out;
    out.X = X(rows, Eigen::all);
    out.y = y(rows);
    out.column_names = column_names;
    return out;
}

GroupStructure::GroupStructure(std::vector<IndexSet> groups, std::vector<std::string> labels)
    : groups_(std::move(groups)), labels_(std::move(labels)) {
    if (labels_.empty()) {
        labels_.reserve(groups_.size());
        for (std::size_t g = 0; g < groups_.size(); ++g) labels_.push_back("g" + std::to_string(g));
    }
    if (labels_.size() != groups_.size()) throw ConfigError("group label count does not match group count");
    int p = 0;
    for (const auto& g : groups_) p += static_cast<int>(g.size());
    owner_.assign(p, -1);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        for (int j : groups_[g]) {
            if (j < 0 || j >= p) throw ConfigError("group column index out of range: " + std::to_string(j));
            if (owner_[j] != -1) throw ConfigError("column " + std::to_string(j) + " belongs to two groups");
            owner_[j] = static_cast<int>(g);
        }
    }
}

GroupStructure GroupStructure::singletons(int p) {
    std::vector<IndexSet> groups(p);
    for (int j = 0; j < p; ++j) groups[j] = {j};
    return GroupStructure(std::move(groups));
}

GroupStructure GroupStructure::contiguous(const std::vector<int>& sizes) {
    std::vector<IndexSet> groups;
    int next = 0;
    for (int s : sizes) {
        IndexSet g(s);
        std::iota(g.begin(), g.end(), next);
        next += s;
        groups.push_back(std::move(g));
    }
    return GroupStructure(std::move(groups));
}

double GroupStructure::mean_group_size() const {
    return static_cast<double>(num_columns()) / static_cast<double>(num_groups());
}

IndexSet GroupStructure::columns_of(const std::vector<int>& group_ids) const {
    IndexSet cols;
    for (int g : group_ids) cols.insert(cols.end(), groups_.at(g).begin(), groups_.at(g).end());
    return cols;
}

void GroupStructure::validate(int p) const {
    if (num_columns() != p) {
        throw ConfigError("groups cover " + std::to_string(num_columns()) + " columns but the design has " +
                          std::to_string(p));
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].empty()) throw ConfigError("group '" + labels_[g] + "' is empty");
    }
    if (std::find(owner_.begin(), owner_.end(), -1) != owner_.end()) {
        throw ConfigError("groups do not cover every column");
    }
}

std::string_view to_string(LossKind kind) {
    switch (kind) {
        case LossKind::gaussian: return "gaussian";
        case LossKind::logistic: return "logistic";
        case LossKind::poisson: return "poisson";
        case LossKind::quasi_poisson: return "quasi_poisson";
    }
    return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
    if (name == "gaussian") return LossKind::gaussian;
    if (name == "logistic" || name == "binomial") return LossKind::logistic;
    if (name == "poisson") return LossKind::poisson;
    if (name == "quasi_poisson" || name == "quasipoisson") return LossKind::quasi_poisson;
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

namespace {

// log(1 + e^t) without overflow.
double log1pexp(double t) {
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

double LossModel::rho(double theta, double y) const {
    switch (kind) {
        case LossKind::gaussian: return 0.5 * (y - theta) * (y - theta);
        case LossKind::logistic: return log1pexp(theta) - y * theta;
        case LossKind::poisson: return std::exp(theta) - y * theta;
        case LossKind::quasi_poisson: {
            // Negative quasi-log-likelihood with V(mu) = mu, zero at mu = y.
            const double ylogy = y > 0 ? y * std::log(y) : 0.0;
            return std::exp(theta) - y * theta + ylogy - y;
        }
    }
    return 0.0;
}

double LossModel::drho(double theta, double y) const {
    switch (kind) {
        case LossKind::gaussian: return theta - y;
        case LossKind::logistic: return sigmoid(theta) - y;
        case LossKind::poisson:
        case LossKind::quasi_poisson: return std::exp(theta) - y;
    }
    return 0.0;
}

double LossModel::d2rho(double theta) const {
    switch (kind) {
        case LossKind::gaussian: return 1.0;
        case LossKind::logistic: {
            const double h = sigmoid(theta);
            return h * (1.0 - h);
        }
        case LossKind::poisson:
        case LossKind::quasi_poisson: return std::exp(theta);
    }
    return 0.0;
}

void validate_dataset(const LossModel& model, const Dataset& ds) {
    if (ds.n() < 2) throw ConfigError("need at least two observations");
    if (ds.p() < 1) throw ConfigError("design has no columns");
    if (ds.y.size() != ds.X.rows()) throw ConfigError("response length does not match design rows");
    for (int i = 0; i < ds.n(); ++i) {
        const double yi = ds.y(i);
        if (!std::isfinite(yi)) throw ConfigError("non-finite response at row " + std::to_string(i));
        if (model.kind == LossKind::logistic && yi != 0.0 && yi != 1.0) {
            throw ConfigError("logistic response must be 0/1; row " + std::to_string(i) + " has " +
                              std::to_string(yi));
        }
        if ((model.kind == LossKind::poisson || model.kind == LossKind::quasi_poisson) &&
            (yi < 0.0 || yi != std::floor(yi))) {
            throw ConfigError("count response must be a non-negative integer; row " + std::to_string(i));
        }
    }
    for (int j = 0; j < ds.p(); ++j) {
        if (ds.X.col(j).cwiseAbs().maxCoeff() == 0.0) {
            throw ConfigError("design column " + std::to_string(j) + " is identically zero");
        }
    }
}

VectorXd linear_predictor(const Dataset& ds, const VectorXd& beta_E, const IndexSet& E) {
    if (E.empty()) return VectorXd::Zero(ds.n());
    if (static_cast<int>(E.size()) == ds.p()) {
        bool identity = true;
        for (int j = 0; j < ds.p(); ++j) identity = identity && E[j] == j;
        if (identity) return ds.X * beta_E;
    }
    return ds.X(Eigen::all, E) * beta_E;
}

namespace {

void check_theta(const LossModel& model, const VectorXd& theta) {
    if (model.kind != LossKind::poisson && model.kind != LossKind::quasi_poisson) return;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta(i)) || theta(i) > 700.0) {
            throw OverflowError("exp(theta) overflows at row " + std::to_string(i), static_cast<long>(i));
        }
    }
}

}  // namespace

double loss_value(const LossModel& model, const Dataset& ds, const VectorXd& beta) {
    const VectorXd theta = ds.X * beta;
    check_theta(model, theta);
    double total = 0.0;
    for (int i = 0; i < ds.n(); ++i) total += model.rho(theta(i), ds.y(i));
    if (!std::isfinite(total)) throw OverflowError("loss is not finite", -1);
    return total;
}

VectorXd gradient(const LossModel& model, const Dataset& ds, const VectorXd& beta_E, const IndexSet& E) {
    const VectorXd theta = linear_predictor(ds, beta_E, E);
    check_theta(model, theta);
    VectorXd r(ds.n());
    for (int i = 0; i < ds.n(); ++i) r(i) = model.drho(theta(i), ds.y(i));
    return ds.X.transpose() * r;
}

VectorXd hessian_diag(const LossModel& model, const Dataset& ds, const VectorXd& beta_E, const IndexSet& E) {
    const VectorXd theta = linear_predictor(ds, beta_E, E);
    check_theta(model, theta);
    VectorXd w(ds.n());
    for (int i = 0; i < ds.n(); ++i) w(i) = model.d2rho(theta(i));
    return w;
}

IndexSet complement(const IndexSet& E, int p) {
    std::vector<char> in(p, 0);
    for (int j : E) in[j] = 1;
    IndexSet out;
    for (int j = 0; j < p; ++j)
        if (!in[j]) out.push_back(j);
    return out;
}

double residual_variance(const Dataset& ds, const VectorXd& beta_E, const IndexSet& E) {
    const int dof = ds.n() - static_cast<int>(E.size());
    if (dof <= 0) throw NumericalError("no residual degrees of freedom for the variance estimate");
    const VectorXd r = ds.y - linear_predictor(ds, beta_E, E);
    return r.squaredNorm() / dof;
}

double estimate_dispersion(const LossModel& model, const Dataset& ds, const VectorXd& beta_E, const IndexSet& E) {
    if (model.kind != LossKind::quasi_poisson) {
        throw ConfigError("dispersion estimation applies to the quasi_poisson model only");
    }
    const int dof = ds.n() - static_cast<int>(E.size());
    if (dof <= 0) {
        throw NumericalError("degrees of freedom n - |E| = " + std::to_string(dof) + " for dispersion estimate");
    }
    const VectorXd theta = linear_predictor(ds, beta_E, E);
    check_theta(model, theta);
    double pearson = 0.0;
    for (int i = 0; i < ds.n(); ++i) {
        const double mu = std::exp(theta(i));
        pearson += (ds.y(i) - mu) * (ds.y(i) - mu) / mu;
    }
    return std::max(model.dispersion_floor, pearson / dof);
}

MomentMatrices estimate_moments(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                                const IndexSet& E, const GroupStructure& groups) {
    const VectorXd w = hessian_diag(model, ds, beta_E, E);
    MomentMatrices m;
    m.E = E;
    // Inactive columns follow the group order, matching the stacked subgradients.
    {
        std::vector<char> in(ds.p(), 0);
        for (int j : E) in[j] = 1;
        for (int g = 0; g < groups.num_groups(); ++g)
            for (int j : groups.members(g))
                if (!in[j]) m.Eprime.push_back(j);
    }
    m.evaluation_point = beta_E;
    m.H = (ds.X.transpose() * w.asDiagonal() * ds.X) / static_cast<double>(ds.n());
    m.H = 0.5 * (m.H + m.H.transpose());

    switch (model.kind) {
        case LossKind::gaussian: m.dispersion = residual_variance(ds, beta_E, E); break;
        case LossKind::quasi_poisson: m.dispersion = estimate_dispersion(model, ds, beta_E, E); break;
        default: m.dispersion = 1.0; break;
    }
    m.K = m.dispersion * m.H;

    if (!E.empty()) {
        Eigen::LLT<MatrixXd> llt(m.H_EE());
        if (!linalg::is_factor_ok(llt)) {
            // Add selected groups one at a time to locate the first that breaks definiteness.
            IndexSet prefix;
            for (int g = 0; g < groups.num_groups(); ++g) {
                bool in_E = false;
                for (int j : groups.members(g)) in_E = in_E || std::find(E.begin(), E.end(), j) != E.end();
                if (!in_E) continue;
                for (int j : groups.members(g))
                    if (std::find(E.begin(), E.end(), j) != E.end()) prefix.push_back(j);
                Eigen::LLT<MatrixXd> partial(m.H(prefix, prefix));
                if (!linalg::is_factor_ok(partial)) {
                    throw RankDeficiencyError("H_EE is singular; collinearity introduced by group '" +
                                              groups.label(g) + "'");
                }
            }
            throw RankDeficiencyError("H_EE is not positive definite");
        }
    }
    return m;
}

}  // namespace postgl
