#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

namespace postgl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Column index list, always kept in group order.
using IndexSet = std::vector<int>;

/// Response vector plus design matrix.
struct Dataset {
    VectorXd y;
    MatrixXd X;
    std::vector<std::string> column_names;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }

    /// Rows selected by `rows`, in that order.
    Dataset subset_rows(const std::vector<int>& rows) const;
};

/// Ordered partition of the columns [0, p) into non-empty groups.
///
/// The group order fixes the layout of every block matrix downstream, so it
/// is preserved exactly as given.
class GroupStructure {
public:
    GroupStructure() = default;
    GroupStructure(std::vector<IndexSet> groups, std::vector<std::string> labels = {});

    static GroupStructure singletons(int p);
    static GroupStructure contiguous(const std::vector<int>& sizes);

    int num_groups() const { return static_cast<int>(groups_.size()); }
    const IndexSet& members(int g) const { return groups_.at(g); }
    int size(int g) const { return static_cast<int>(groups_.at(g).size()); }
    const std::string& label(int g) const { return labels_.at(g); }
    int group_of(int column) const { return owner_.at(column); }
    int num_columns() const { return static_cast<int>(owner_.size()); }
    double mean_group_size() const;

    /// Concatenated column indices of the listed groups.
    IndexSet columns_of(const std::vector<int>& group_ids) const;

    /// Throws ConfigError unless this is a partition of [0, p).
    void validate(int p) const;

private:
    std::vector<IndexSet> groups_;
    std::vector<std::string> labels_;
    std::vector<int> owner_;
};

enum class LossKind { gaussian, logistic, poisson, quasi_poisson };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

/// A convex, twice differentiable per-observation loss rho(theta; y).
///
/// The same contract would admit multi-parameter or smoothed quantile losses;
/// only the four single-index families below are provided.
struct LossModel {
    LossKind kind = LossKind::gaussian;
    /// Dispersion floor used by the quasi-Poisson Pearson estimator.
    double dispersion_floor = 1.0;

    /// K = dispersion * H holds for every kind (dispersion 1 for logistic/poisson).
    bool is_likelihood() const { return kind != LossKind::quasi_poisson; }

    double rho(double theta, double y) const;
    double drho(double theta, double y) const;
    double d2rho(double theta) const;
};

/// Throws ConfigError if the responses are incompatible with the model.
void validate_dataset(const LossModel& model, const Dataset& ds);

/// Linear predictor X_E beta_E.
VectorXd linear_predictor(const Dataset& ds, const VectorXd& beta_E, const IndexSet& E);

/// sum_i rho(x_i' beta; y_i) for a full p-vector beta.
double loss_value(const LossModel& model, const Dataset& ds, const VectorXd& beta);

/// X' grad l(X_E beta_E; Y), a full p-vector.
VectorXd gradient(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                  const IndexSet& E);

/// Diagonal of the n x n Hessian of l at X_E beta_E.
VectorXd hessian_diag(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                      const IndexSet& E);

/// Plug-in moment matrices H and K, both p x p in the original column order.
struct MomentMatrices {
    MatrixXd H;
    MatrixXd K;
    /// K = dispersion * H. 1 for logistic/poisson, residual variance for
    /// gaussian, Pearson estimate for quasi-Poisson.
    double dispersion = 1.0;
    IndexSet E;
    IndexSet Eprime;
    VectorXd evaluation_point;

    MatrixXd H_EE() const { return H(E, E); }
    MatrixXd H_EpE() const { return H(Eprime, E); }
    MatrixXd K_EE() const { return K(E, E); }
    MatrixXd K_EpE() const { return K(Eprime, E); }
    MatrixXd K_EpEp() const { return K(Eprime, Eprime); }
};

/// Complement of E in [0, p), ascending. (MomentMatrices::Eprime uses group order instead.)
IndexSet complement(const IndexSet& E, int p);

MomentMatrices estimate_moments(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                                const IndexSet& E, const GroupStructure& groups);

/// Pearson dispersion (1/(n-|E|)) sum (y - mu)^2 / mu, floored at model.dispersion_floor.
double estimate_dispersion(const LossModel& model, const Dataset& ds, const VectorXd& beta_E,
                           const IndexSet& E);

/// Residual variance RSS / (n - |E|) of a gaussian fit.
double residual_variance(const Dataset& ds, const VectorXd& beta_E, const IndexSet& E);

}  // namespace postgl
