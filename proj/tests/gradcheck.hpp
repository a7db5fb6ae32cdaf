#pragma once

#include <algorithm>
#include <functional>

#include "milda/model.hpp"

namespace milda::testing {

/// ||a - n|| / (||a|| + ||n||), 0 when both vanish.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
    const double denom = analytic.norm() + numeric.norm();
    if (denom < 1e-12) return 0.0;
    return (analytic - numeric).norm() / denom;
}

/// Central differences of `loss` with respect to every entry of `value`.
inline Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& value, const std::function<double()>& loss,
                                        double step = 1e-5) {
    Eigen::MatrixXd g(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.rows(); ++i)
        for (Eigen::Index j = 0; j < value.cols(); ++j) {
            const double keep = value(i, j);
            value(i, j) = keep + step;
            const double up = loss();
            value(i, j) = keep - step;
            const double down = loss();
            value(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * step);
        }
    return g;
}

/// Worst relative error over all parameters and the input.
struct GradReport {
    double worst_parameter = 0.0;
    double input = 0.0;
};

}  // namespace milda::testing
