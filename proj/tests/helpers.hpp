#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "postgl/model.hpp"

namespace testutil {

using postgl::Dataset;
using postgl::MatrixXd;
using postgl::VectorXd;

inline MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd X(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) X(i, j) = z(rng);
    return X;
}

inline Dataset dataset(MatrixXd X, VectorXd y) {
    Dataset ds;
    ds.X = std::move(X);
    ds.y = std::move(y);
    return ds;
}

/// Central difference of a scalar function along each coordinate.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-5) {
    VectorXd g(x.size());
    for (int k = 0; k < x.size(); ++k) {
        VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        g(k) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

inline double rel_err(const VectorXd& a, const VectorXd& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace testutil
